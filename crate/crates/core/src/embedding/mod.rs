//! Hashed text embeddings, the subgraph encoder, and gated fusion.
//!
//! Text is embedded by feature hashing: every token lands in one of
//! [`DIM`] buckets chosen by its FNV-1a 64-bit hash, with the sign taken from
//! the hash's top bit, and the accumulated vector is L2-normalized. The
//! subgraph encoder is a parameter-free mean aggregator run for two rounds
//! over node embeddings; fusion blends a text vector and a graph vector with
//! a scalar gate.

use serde::{Deserialize, Serialize};

use crate::kg::{KGEdge, KGNode};
use crate::parser::tokenize::raw_tokens;

pub mod gate;

pub use gate::{fit_gate, gate_recall, GateError, DEFAULT_ALPHA};

/// Embedding dimensionality.
pub const DIM: usize = 256;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Bucket index and sign for one token.
pub fn hash_feature(token: &str) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    ((h % DIM as u64) as usize, sign)
}

/// A `DIM`-component vector that is either all zeros or unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn zero() -> Self {
        Embedding(vec![0.0; DIM])
    }

    /// Unit basis vector `e_i`.
    pub fn basis(i: usize) -> Self {
        let mut v = vec![0.0; DIM];
        v[i] = 1.0;
        Embedding(v)
    }

    /// Normalizes `values` (zero stays zero).
    ///
    /// # Panics
    /// If `values.len() != DIM`.
    pub fn from_raw(values: Vec<f64>) -> Self {
        assert_eq!(values.len(), DIM, "embedding must have {DIM} components");
        let mut e = Embedding(values);
        e.normalize_in_place();
        e
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    fn normalize_in_place(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for x in &mut self.0 {
                *x /= n;
            }
        }
    }

    /// Little-endian `f64` bytes, the golden-file record layout.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.0.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != DIM * 8 {
            return None;
        }
        Some(Embedding(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect(),
        ))
    }
}

/// Embeds already-tokenized text.
pub fn embed_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Embedding {
    let mut v = vec![0.0; DIM];
    for t in tokens {
        let (i, s) = hash_feature(t);
        v[i] += s;
    }
    Embedding::from_raw(v)
}

pub fn embed_text(text: &str) -> Embedding {
    let toks = raw_tokens(text);
    embed_tokens(toks.iter().map(|t| t.text.as_str()))
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FusionGate {
    alpha: f64,
}

impl FusionGate {
    /// `alpha = 1`: the record embedding alone.
    pub const TEXT_ONLY: FusionGate = FusionGate { alpha: 1.0 };
    /// `alpha = 0`: the subgraph embedding alone.
    pub const GRAPH_ONLY: FusionGate = FusionGate { alpha: 0.0 };

    pub fn new(alpha: f64) -> Result<Self, GateError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(FusionGate { alpha })
        } else {
            Err(GateError::OutOfRange(alpha))
        }
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

impl Default for FusionGate {
    fn default() -> Self {
        FusionGate {
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl TryFrom<f64> for FusionGate {
    type Error = GateError;
    fn try_from(v: f64) -> Result<Self, GateError> {
        FusionGate::new(v)
    }
}

impl From<FusionGate> for f64 {
    fn from(g: FusionGate) -> f64 {
        g.alpha
    }
}

/// `normalize(alpha * h_x + (1 - alpha) * h_g)`.
pub fn fuse(h_x: &Embedding, h_g: &Embedding, gate: FusionGate) -> Embedding {
    // The endpoints return their input untouched so that a saturated gate
    // reproduces single-channel retrieval bit for bit.
    if gate.alpha == 1.0 {
        return h_x.clone();
    }
    if gate.alpha == 0.0 {
        return h_g.clone();
    }
    let a = gate.alpha;
    let v = h_x
        .0
        .iter()
        .zip(&h_g.0)
        .map(|(x, g)| a * x + (1.0 - a) * g)
        .collect();
    Embedding::from_raw(v)
}

fn blend_normalize(own: &[f64], mean: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = own.iter().zip(mean).map(|(s, m)| 0.5 * s + 0.5 * m).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

/// Two rounds of mean aggregation over a graph fragment.
///
/// Nodes start from `embed_text(name + synonyms)`. Each round replaces a node
/// state by `normalize(0.5 * own + 0.5 * mean(neighbours))`, where neighbours
/// are the distinct nodes joined to it by any fragment edge in either
/// direction; isolated nodes keep their state. The result is the normalized
/// mean of the final states; a lone node's state is returned unchanged.
/// Edges with an endpoint outside the fragment are ignored. Summation runs in
/// node-id order, so the output does not depend on the order of `nodes` or
/// `edges`.
pub fn encode_subgraph(nodes: &[&KGNode], edges: &[&KGEdge]) -> Embedding {
    let mut order: Vec<&KGNode> = nodes.to_vec();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    order.dedup_by(|a, b| a.id == b.id);
    if order.is_empty() {
        return Embedding::zero();
    }
    let pos = |id: &str| order.binary_search_by(|n| n.id.as_str().cmp(id)).ok();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
    for e in edges {
        if let (Some(a), Some(b)) = (pos(&e.src), pos(&e.dst)) {
            if a != b {
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
    }
    for list in &mut nbrs {
        list.sort_unstable();
        list.dedup();
    }

    let mut state: Vec<Vec<f64>> = order
        .iter()
        .map(|n| embed_text(&n.lexical_text()).0)
        .collect();
    for _ in 0..2 {
        state = (0..order.len())
            .map(|i| {
                if nbrs[i].is_empty() {
                    return state[i].clone();
                }
                let mut mean = vec![0.0; DIM];
                for &j in &nbrs[i] {
                    for (m, x) in mean.iter_mut().zip(&state[j]) {
                        *m += x;
                    }
                }
                let k = nbrs[i].len() as f64;
                for m in &mut mean {
                    *m /= k;
                }
                blend_normalize(&state[i], &mean)
            })
            .collect();
    }
    if let [only] = &state[..] {
        return Embedding(only.clone());
    }
    let mut mean = vec![0.0; DIM];
    for s in &state {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    let k = state.len() as f64;
    for m in &mut mean {
        *m /= k;
    }
    Embedding::from_raw(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::NodeKind;

    #[test]
    fn empty_text_is_zero() {
        assert!(embed_text("").is_zero());
        assert!(embed_text(" ,.; ").is_zero());
    }

    #[test]
    fn case_folding() {
        let a = embed_text("pulpitis");
        let b = embed_text("PULPITIS");
        assert_eq!(a, b);
        assert_eq!(cosine(&a, &b), 1.0);
    }

    #[test]
    fn nonzero_embeddings_are_unit() {
        for t in ["a", "pain near tooth #85", "x y z x y z"] {
            assert!((embed_text(t).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn cosine_cases() {
        let v = embed_text("periapical abscess");
        assert!((cosine(&v, &v) - 1.0).abs() <= 1e-9);
        assert_eq!(cosine(&v, &Embedding::zero()), 0.0);
        assert_eq!(cosine(&Embedding::basis(0), &Embedding::basis(1)), 0.0);
    }

    #[test]
    fn fuse_gate_identities() {
        let hx = embed_text("swelling near tooth");
        let hg = embed_text("amoxicillin");
        assert_eq!(fuse(&hx, &hg, FusionGate::new(1.0).unwrap()), hx);
        assert_eq!(fuse(&hx, &hg, FusionGate::new(0.0).unwrap()), hg);
        let half = fuse(
            &Embedding::basis(0),
            &Embedding::basis(1),
            FusionGate::new(0.5).unwrap(),
        );
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((half.values()[0] - r).abs() < 1e-15);
        assert!((half.values()[1] - r).abs() < 1e-15);
        assert!(half.values()[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fuse_zero_stays_zero() {
        let z = Embedding::zero();
        assert!(fuse(&z, &z, FusionGate::default()).is_zero());
    }

    #[test]
    fn gate_range_enforced() {
        assert!(FusionGate::new(-0.1).is_err());
        assert!(FusionGate::new(1.5).is_err());
        assert!(FusionGate::new(f64::NAN).is_err());
    }

    #[test]
    fn encoder_empty_and_singleton() {
        assert!(encode_subgraph(&[], &[]).is_zero());
        let n = KGNode::new("x", NodeKind::Symptom, "swelling").with_synonyms(["swollen"]);
        assert_eq!(encode_subgraph(&[&n], &[]), embed_text("swelling swollen"));
    }

    #[test]
    fn le_bytes_round_trip() {
        let e = embed_text("fever");
        assert_eq!(Embedding::from_le_bytes(&e.to_le_bytes()), Some(e));
        assert_eq!(Embedding::from_le_bytes(&[0u8; 3]), None);
    }
}
