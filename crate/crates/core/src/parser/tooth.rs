//! FDI two-digit tooth notation.
//!
//! First digit is the quadrant (1–4 permanent, 5–8 primary; 1/5 upper right,
//! 2/6 upper left, 3/7 lower left, 4/8 lower right), second digit the tooth
//! position counted from the midline (1–8 permanent, 1–5 primary).

use crate::kg::{KGNode, KnowledgeGraph};

/// Whether a two-digit code names a real tooth.
pub fn is_valid_fdi(code: &str) -> bool {
    let b = code.as_bytes();
    if b.len() != 2 || !b.iter().all(u8::is_ascii_digit) {
        return false;
    }
    let (quadrant, position) = (b[0] - b'0', b[1] - b'0');
    match quadrant {
        1..=4 => (1..=8).contains(&position),
        5..=8 => (1..=5).contains(&position),
        _ => false,
    }
}

pub fn is_primary_dentition(code: &str) -> bool {
    is_valid_fdi(code) && matches!(code.as_bytes()[0], b'5'..=b'8')
}

/// Resolves a `#NN` token to its ToothSite node, if the code is valid and
/// present in the graph.
pub fn resolve_tooth_notation<'g>(graph: &'g KnowledgeGraph, token: &str) -> Option<&'g KGNode> {
    let code = token.strip_prefix('#')?;
    if !is_valid_fdi(code) {
        return None;
    }
    graph.tooth_by_fdi(code)
}
