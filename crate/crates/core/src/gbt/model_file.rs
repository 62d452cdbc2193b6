//! JSON model files.
//!
//! Layout: `{format_version, base_score, params, feature_names, trees: [{nodes:
//! [{feature, threshold, left, right, cover} | {leaf, cover}]}]}`. Every float is
//! written in scientific notation with 17 significant digits, which round-trips
//! exactly and makes the text identical across platforms.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use super::{GbtModel, Hyperparams, ModelError, Node, Result, Tree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    base_score: f64,
    params: Hyperparams,
    feature_names: Vec<String>,
    trees: Vec<TreeFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    nodes: Vec<NodeFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeFile {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        leaf: f64,
        cover: f64,
    },
}

/// Compact JSON with 17-significant-digit floats.
struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn write_model(model: &GbtModel) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        base_score: model.base_score,
        params: model.params.clone(),
        feature_names: model.feature_names.clone(),
        trees: model
            .trees
            .iter()
            .map(|t| TreeFile {
                nodes: t
                    .nodes()
                    .iter()
                    .map(|n| match *n {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            cover,
                        } => NodeFile::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            cover,
                        },
                        Node::Leaf { value, cover } => NodeFile::Leaf { leaf: value, cover },
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    file.serialize(&mut ser).expect("model values are finite");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

pub fn read_model(text: &str) -> Result<GbtModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(ModelError::Integrity(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    file.params.validate()?;
    let trees = file
        .trees
        .into_iter()
        .map(|t| {
            Tree::from_nodes(
                t.nodes
                    .into_iter()
                    .map(|n| match n {
                        NodeFile::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            cover,
                        } => Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            cover,
                        },
                        NodeFile::Leaf { leaf, cover } => Node::Leaf { value: leaf, cover },
                    })
                    .collect(),
            )
        })
        .collect();
    GbtModel::from_parts(file.base_score, trees, file.params, file.feature_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    const STUMP: &str = r#"{
      "format_version": 1,
      "base_score": 2.0,
      "params": {"max_depth": 1, "min_child_weight": 1.0, "eta": 1.0, "subsample": 1.0,
                 "colsample_bytree": 1.0, "rounds": 1, "lambda": 1.0, "gamma": 0.0, "seed": 0},
      "feature_names": ["a", "b", "c", "x3"],
      "trees": [{"nodes": [
        {"feature": 3, "threshold": 0.5, "left": 1, "right": 2, "cover": 10},
        {"leaf": -1.0, "cover": 4},
        {"leaf": 1.0, "cover": 6}
      ]}]
    }"#;

    #[test]
    fn hand_written_stump_predicts() {
        let m = read_model(STUMP).unwrap();
        assert_eq!(m.predict(&[0.0, 0.0, 0.0, 0.2]).unwrap(), 1.0);
        assert_eq!(m.predict(&[0.0, 0.0, 0.0, 0.7]).unwrap(), 3.0);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let m = read_model(STUMP).unwrap();
        let text = write_model(&m);
        assert!(text.contains(r#""base_score":2.0000000000000000e0"#), "{text}");
        assert!(text.contains(r#"{"leaf":-1.0000000000000000e0,"cover":4.0000000000000000e0}"#));
        assert_eq!(read_model(&text).unwrap(), m);
    }

    #[test]
    fn truncated_file_reports_location() {
        let cut = &STUMP[..STUMP.len() / 2];
        match read_model(cut) {
            Err(ModelError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn broken_structure_is_integrity_error() {
        let bad = STUMP.replace(r#""cover": 10"#, r#""cover": 11"#);
        assert!(matches!(read_model(&bad), Err(ModelError::Integrity(_))));
        let bad = STUMP.replace(r#""feature": 3"#, r#""feature": 4"#);
        assert!(matches!(read_model(&bad), Err(ModelError::Integrity(_))));
        let bad = STUMP.replace(r#""format_version": 1"#, r#""format_version": 9"#);
        assert!(matches!(read_model(&bad), Err(ModelError::Integrity(_))));
    }
}
