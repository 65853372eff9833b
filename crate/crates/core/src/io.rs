//! Text formats: the dataset header, JSON-Lines episodes and target
//! policy tables.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::game::{Episode, GameError, GameShape, JointPolicy, OfflineDataset};

/// Parse failures of the text formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {source}")]
    Line { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Reward bound written as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Bound(x)),
            Raw::Text(t) => parse_bound(&t).map(Bound).map_err(serde::de::Error::custom),
        }
    }
}

/// Parses a positive bound; `inf`, `infinity` and `+inf` give `f64::INFINITY`.
pub fn parse_bound(text: &str) -> Result<f64, String> {
    let t = text.trim().to_ascii_lowercase();
    let b = match t.as_str() {
        "inf" | "+inf" | "infinity" => f64::INFINITY,
        _ => t.parse::<f64>().map_err(|e| format!("invalid bound {text:?}: {e}"))?,
    };
    if b.is_nan() || b <= 0.0 {
        return Err(format!("bound must be positive, got {text:?}"));
    }
    Ok(b)
}

/// Sidecar header describing a dataset's shape and reward bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    pub n_states: usize,
    pub actions: Vec<usize>,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub b: Bound,
}

impl DatasetHeader {
    pub fn new(shape: &GameShape, bound: f64) -> Self {
        Self { n: shape.n_players(), n_states: shape.n_states(), actions: shape.actions().to_vec(), horizon: shape.horizon(), b: Bound(bound) }
    }

    pub fn shape(&self) -> Result<GameShape, FormatError> {
        if self.actions.len() != self.n {
            return Err(FormatError::Invalid(format!("header lists {} action counts for {} players", self.actions.len(), self.n)));
        }
        Ok(GameShape::new(self.n_states, self.actions.clone(), self.horizon)?)
    }

    pub fn bound(&self) -> f64 {
        self.b.0
    }
}

/// One episode per line.
pub fn dataset_to_jsonl(ds: &OfflineDataset) -> String {
    let mut out = String::new();
    for ep in ds.episodes() {
        out.push_str(&serde_json::to_string(ep).expect("episodes serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSON-Lines episodes against `shape`; blank lines are skipped.
pub fn dataset_from_jsonl(text: &str, shape: &GameShape) -> Result<OfflineDataset, FormatError> {
    let mut episodes = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode = serde_json::from_str(line).map_err(|source| FormatError::Line { line: k + 1, source })?;
        episodes.push(ep);
    }
    Ok(OfflineDataset::new(shape.clone(), episodes)?)
}

/// Parses a target policy: `"all-zeros"`, or a JSON table indexed
/// `[h][s]` whose entries are joint indices or per-player action tuples.
pub fn parse_policy(text: &str, shape: &GameShape) -> Result<JointPolicy, FormatError> {
    let t = text.trim();
    if t == "all-zeros" || t == "\"all-zeros\"" {
        return Ok(JointPolicy::all_zeros(shape));
    }
    let value: serde_json::Value = serde_json::from_str(t)?;
    let rows = value.as_array().ok_or_else(|| FormatError::Invalid("policy must be an array indexed [h][s]".into()))?;
    let mut table = Vec::with_capacity(rows.len());
    for row in rows {
        let cells = row.as_array().ok_or_else(|| FormatError::Invalid("each period of the policy must be an array over states".into()))?;
        let mut out = Vec::with_capacity(cells.len());
        for cell in cells {
            let joint = if let Some(a) = cell.as_u64() {
                a as usize
            } else if let Some(tuple) = cell.as_array() {
                let t: Option<Vec<usize>> = tuple.iter().map(|x| x.as_u64().map(|v| v as usize)).collect();
                shape.joint_index(&t.ok_or_else(|| FormatError::Invalid("action tuples must hold nonnegative integers".into()))?)?
            } else {
                return Err(FormatError::Invalid(format!("unrecognised policy entry {cell}")));
            };
            out.push(joint);
        }
        table.push(out);
    }
    Ok(JointPolicy::from_joint_table(shape, &table)?)
}

/// Policy as a `[h][s]` table of action tuples.
pub fn policy_tuples(policy: &JointPolicy, shape: &GameShape) -> Vec<Vec<Vec<usize>>> {
    policy.to_joint_table().iter().map(|row| row.iter().map(|&a| shape.joint_tuple(a)).collect()).collect()
}
