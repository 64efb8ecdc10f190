use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The eight node kinds the graph knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Drug,
    DrugClass,
    Condition,
    Symptom,
    ToothSite,
    AllergyClass,
    AgeBand,
    GuidelinePassage,
}

impl NodeKind {
    pub const ALL: [NodeKind; 8] = [
        NodeKind::Drug,
        NodeKind::DrugClass,
        NodeKind::Condition,
        NodeKind::Symptom,
        NodeKind::ToothSite,
        NodeKind::AllergyClass,
        NodeKind::AgeBand,
        NodeKind::GuidelinePassage,
    ];
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Edge relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Treats,
    HasDoseRule,
    MemberOf,
    CrossReactive,
    InteractsWith,
    ContraindicatedIn,
    LocatedAt,
    Indicates,
    Supports,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::Treats,
        Relation::HasDoseRule,
        Relation::MemberOf,
        Relation::CrossReactive,
        Relation::InteractsWith,
        Relation::ContraindicatedIn,
        Relation::LocatedAt,
        Relation::Indicates,
        Relation::Supports,
    ];

    /// Relations whose edges are stored once but read from both endpoints.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Relation::InteractsWith)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Treats => "treats",
            Relation::HasDoseRule => "has_dose_rule",
            Relation::MemberOf => "member_of",
            Relation::CrossReactive => "cross_reactive",
            Relation::InteractsWith => "interacts_with",
            Relation::ContraindicatedIn => "contraindicated_in",
            Relation::LocatedAt => "located_at",
            Relation::Indicates => "indicates",
            Relation::Supports => "supports",
        }
    }

    /// Allowed (source kinds, destination kinds).
    pub(crate) fn endpoint_kinds(self) -> (&'static [NodeKind], &'static [NodeKind]) {
        use NodeKind::*;
        match self {
            Relation::Treats => (&[Drug], &[Condition]),
            Relation::HasDoseRule => (&[Drug], &[AgeBand]),
            Relation::MemberOf => (&[Drug], &[DrugClass]),
            Relation::CrossReactive => (&[Drug, DrugClass], &[AllergyClass]),
            Relation::InteractsWith => (&[Drug], &[Drug]),
            Relation::ContraindicatedIn => (&[Drug, DrugClass], &[Condition]),
            Relation::LocatedAt => (&[Condition, Symptom], &[ToothSite]),
            Relation::Indicates => (&[Symptom], &[Condition]),
            Relation::Supports => (&[GuidelinePassage], &[Drug, DrugClass, Condition]),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scalar attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            AttrValue::Int(v) => Some(v as f64),
            AttrValue::Float(v) => Some(v),
            _ => None,
        }
    }

    /// Integer view; floats are accepted only when integral.
    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            AttrValue::Int(v) => Some(v),
            AttrValue::Float(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Some(v as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Float(v)
    }
}

impl From<i64> for AttrValue {
    fn from(v: i64) -> Self {
        AttrValue::Int(v)
    }
}

impl From<&str> for AttrValue {
    fn from(v: &str) -> Self {
        AttrValue::Text(v.to_owned())
    }
}

pub type Attrs = BTreeMap<String, AttrValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGNode {
    pub id: String,
    pub kind: NodeKind,
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub attrs: Attrs,
}

impl KGNode {
    pub fn new(id: impl Into<String>, kind: NodeKind, name: impl Into<String>) -> Self {
        KGNode {
            id: id.into(),
            kind,
            name: name.into(),
            synonyms: Vec::new(),
            attrs: Attrs::new(),
        }
    }

    pub fn with_synonyms<I, S>(mut self, synonyms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.synonyms = synonyms.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_attr(mut self, key: &str, value: impl Into<AttrValue>) -> Self {
        self.attrs.insert(key.to_owned(), value.into());
        self
    }

    /// Name followed by all synonyms, space separated. This is the text a
    /// node is embedded from.
    pub fn lexical_text(&self) -> String {
        let mut text = self.name.clone();
        for syn in &self.synonyms {
            text.push(' ');
            text.push_str(syn);
        }
        text
    }

    /// Passage text for `GuidelinePassage` nodes.
    pub fn passage_text(&self) -> Option<&str> {
        self.attrs.get("text").and_then(AttrValue::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGEdge {
    pub src: String,
    pub rel: Relation,
    pub dst: String,
    #[serde(default)]
    pub attrs: Attrs,
}

impl KGEdge {
    pub fn new(src: impl Into<String>, rel: Relation, dst: impl Into<String>) -> Self {
        KGEdge {
            src: src.into(),
            rel,
            dst: dst.into(),
            attrs: Attrs::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: impl Into<AttrValue>) -> Self {
        self.attrs.insert(key.to_owned(), value.into());
        self
    }

    /// Severity of an `interacts_with` edge.
    pub fn severity(&self) -> Option<f64> {
        self.attrs.get("severity").and_then(AttrValue::as_f64)
    }

    /// `line` attribute of a `treats` edge.
    pub fn line(&self) -> Option<TherapyLine> {
        match self.attrs.get("line").and_then(AttrValue::as_str) {
            Some("first") => Some(TherapyLine::First),
            Some("second") => Some(TherapyLine::Second),
            _ => None,
        }
    }

    /// The endpoint opposite to `id`.
    pub fn other(&self, id: &str) -> &str {
        if self.src == id {
            &self.dst
        } else {
            &self.src
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TherapyLine {
    First,
    Second,
}

/// Typed view of a `has_dose_rule` edge joined with its age band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseRule {
    pub drug: String,
    pub age_band: String,
    pub min_months: u32,
    pub max_months: u32,
    pub min_mg_per_kg_day: f64,
    pub max_mg_per_kg_day: f64,
    pub abs_max_mg_day: f64,
    pub freq_min_per_day: u32,
    pub freq_max_per_day: u32,
    pub duration_min_days: u32,
    pub duration_max_days: u32,
}

impl DoseRule {
    pub fn covers_age(&self, age_months: u32) -> bool {
        self.min_months <= age_months && age_months <= self.max_months
    }

    pub fn dose_in_band(&self, mg_per_kg_day: f64) -> bool {
        self.min_mg_per_kg_day <= mg_per_kg_day && mg_per_kg_day <= self.max_mg_per_kg_day
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min_mg_per_kg_day + self.max_mg_per_kg_day)
    }

    pub fn frequency_in_range(&self, per_day: u32) -> bool {
        self.freq_min_per_day <= per_day && per_day <= self.freq_max_per_day
    }

    pub fn duration_in_range(&self, days: u32) -> bool {
        self.duration_min_days <= days && days <= self.duration_max_days
    }
}

/// One line of the graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphRecord {
    Node(KGNode),
    Edge(KGEdge),
}
