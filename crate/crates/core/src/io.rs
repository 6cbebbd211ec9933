//! Versioned JSON documents (`"format": "csgs-v1"`) for models, structures and
//! feature sets.
//!
//! ```json
//! {"format":"csgs-v1","kind":"canonical","schema":{...},
//!  "graphs":[{"context":[0,1,1],"edges":[[0,1]]}]}
//! {"format":"csgs-v1","kind":"graph","schema":{...},"edges":[[0,2]]}
//! {"format":"csgs-v1","schema":{...},"features":[{"scope":[0,1],"values":[1,0],"weight":0.3}]}
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Context, VariableSchema};
use crate::error::{Error, Result};
use crate::model::LogLinearModel;
use crate::structures::{CanonicalGraph, CanonicalModel, Feature, UGraph};

pub const FORMAT: &str = "csgs-v1";

fn check_format(found: &str) -> Result<()> {
    if found != FORMAT {
        return Err(Error::Format(format!(
            "unsupported format {found:?}, expected {FORMAT:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub scope: Vec<usize>,
    pub values: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl FeatureRecord {
    fn of(f: &Feature, weight: Option<f64>) -> Self {
        FeatureRecord {
            scope: f.scope().to_vec(),
            values: f.values().to_vec(),
            weight,
        }
    }

    fn feature(&self) -> Result<Feature> {
        Feature::new(self.scope.clone(), self.values.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphRecord {
    context: Vec<u32>,
    edges: Vec<(usize, usize)>,
}

/// A learned structure: a canonical model or a single graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Canonical(CanonicalModel),
    Graph {
        schema: VariableSchema,
        graph: UGraph,
    },
}

impl Structure {
    pub fn schema(&self) -> &VariableSchema {
        match self {
            Structure::Canonical(cm) => cm.schema(),
            Structure::Graph { schema, .. } => schema,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum StructureBody {
    Canonical {
        schema: VariableSchema,
        graphs: Vec<GraphRecord>,
    },
    Graph {
        schema: VariableSchema,
        edges: Vec<(usize, usize)>,
    },
}

#[derive(Serialize, Deserialize)]
struct StructureDoc {
    format: String,
    #[serde(flatten)]
    body: StructureBody,
}

pub fn structure_to_json(s: &Structure) -> Result<String> {
    let body = match s {
        Structure::Canonical(cm) => StructureBody::Canonical {
            schema: cm.schema().clone(),
            graphs: cm
                .graphs()
                .iter()
                .map(|g| GraphRecord {
                    context: g.context.values().to_vec(),
                    edges: g.graph.edges(),
                })
                .collect(),
        },
        Structure::Graph { schema, graph } => StructureBody::Graph {
            schema: schema.clone(),
            edges: graph.edges(),
        },
    };
    let doc = StructureDoc {
        format: FORMAT.into(),
        body,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn structure_from_json(text: &str) -> Result<Structure> {
    let doc: StructureDoc = serde_json::from_str(text)?;
    check_format(&doc.format)?;
    match doc.body {
        StructureBody::Canonical { schema, graphs } => {
            schema.validate()?;
            let n = schema.len();
            let graphs = graphs
                .into_iter()
                .map(|g| {
                    if g.context.len() != n {
                        return Err(Error::Format(format!(
                            "context of length {} for n = {n}",
                            g.context.len()
                        )));
                    }
                    CanonicalGraph::new(UGraph::from_edges(n, &g.edges)?, Context::full(&g.context))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Structure::Canonical(CanonicalModel::new(schema, graphs)?))
        }
        StructureBody::Graph { schema, edges } => {
            schema.validate()?;
            let graph = UGraph::from_edges(schema.len(), &edges)?;
            Ok(Structure::Graph { schema, graph })
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    schema: VariableSchema,
    features: Vec<FeatureRecord>,
}

pub fn model_to_json(m: &LogLinearModel) -> Result<String> {
    let doc = ModelDoc {
        format: FORMAT.into(),
        schema: m.schema().clone(),
        features: m
            .features()
            .iter()
            .zip(m.weights())
            .map(|(f, &w)| FeatureRecord::of(f, Some(w)))
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn model_from_json(text: &str) -> Result<LogLinearModel> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    check_format(&doc.format)?;
    doc.schema.validate()?;
    let mut feats = Vec::with_capacity(doc.features.len());
    let mut weights = Vec::with_capacity(doc.features.len());
    for r in &doc.features {
        feats.push(r.feature()?);
        weights.push(
            r.weight
                .ok_or_else(|| Error::Format("model feature without a weight".into()))?,
        );
    }
    LogLinearModel::new(doc.schema, feats, weights)
}

#[derive(Serialize, Deserialize)]
struct FeatureSetDoc {
    format: String,
    features: Vec<FeatureRecord>,
}

pub fn features_to_json<'a, I: IntoIterator<Item = &'a Feature>>(feats: I) -> Result<String> {
    let doc = FeatureSetDoc {
        format: FORMAT.into(),
        features: feats
            .into_iter()
            .map(|f| FeatureRecord::of(f, None))
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a feature set; weights, when present, are returned alongside.
pub fn features_from_json(text: &str) -> Result<Vec<(Feature, Option<f64>)>> {
    let doc: FeatureSetDoc = serde_json::from_str(text)?;
    check_format(&doc.format)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(doc.features.len());
    for r in doc.features {
        let f = r.feature()?;
        if !seen.insert(f.clone()) {
            return Err(Error::Format(format!("duplicate feature {f:?}")));
        }
        out.push((f, r.weight));
    }
    Ok(out)
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth_model;

    #[test]
    fn structure_round_trip() {
        let gt = synth_model(4, -1.0, 1.0, 1).unwrap();
        let s = Structure::Canonical(gt.canonical.clone());
        let back = structure_from_json(&structure_to_json(&s).unwrap()).unwrap();
        assert_eq!(back, s);

        let g = Structure::Graph {
            schema: VariableSchema::binary(3),
            graph: UGraph::from_edges(3, &[(0, 2)]).unwrap(),
        };
        let text = structure_to_json(&g).unwrap();
        assert!(text.contains("\"kind\": \"graph\""));
        assert_eq!(structure_from_json(&text).unwrap(), g);
    }

    #[test]
    fn model_round_trip() {
        let gt = synth_model(3, -1.0, 1.0, 2).unwrap();
        let text = model_to_json(&gt.model).unwrap();
        assert!(text.contains("csgs-v1"));
        assert_eq!(model_from_json(&text).unwrap(), gt.model);
    }

    #[test]
    fn feature_set_round_trip() {
        let feats = vec![
            Feature::new(vec![0, 1], vec![1, 0]).unwrap(),
            Feature::new(vec![2], vec![1]).unwrap(),
        ];
        let parsed = features_from_json(&features_to_json(&feats).unwrap()).unwrap();
        assert_eq!(
            parsed.into_iter().map(|(f, _)| f).collect::<Vec<_>>(),
            feats
        );
    }

    #[test]
    fn rejects_malformed_documents() {
        let schema = r#"{"names":["a","b"],"arities":[2,2]}"#;
        let bad = [
            format!(r#"{{"format":"csgs-v0","kind":"graph","schema":{schema},"edges":[]}}"#),
            format!(r#"{{"format":"csgs-v1","kind":"graph","schema":{schema},"edges":[[0,0]]}}"#),
            format!(r#"{{"format":"csgs-v1","kind":"graph","schema":{schema},"edges":[[0,5]]}}"#),
            format!(
                r#"{{"format":"csgs-v1","kind":"canonical","schema":{schema},"graphs":[{{"context":[0],"edges":[]}}]}}"#
            ),
            format!(
                r#"{{"format":"csgs-v1","kind":"canonical","schema":{schema},"graphs":[{{"context":[0,3],"edges":[]}}]}}"#
            ),
            r#"{"format":"csgs-v1","kind":"graph","schema":{"names":["a"],"arities":[1]},"edges":[]}"#.into(),
            "not json".into(),
        ];
        for doc in &bad {
            assert!(structure_from_json(doc).is_err(), "{doc}");
        }
        let m = format!(
            r#"{{"format":"csgs-v1","schema":{schema},"features":[{{"scope":[1,0],"values":[0,0],"weight":1}}]}}"#
        );
        assert!(model_from_json(&m).is_err());
        let m = format!(
            r#"{{"format":"csgs-v1","schema":{schema},"features":[{{"scope":[0],"values":[0]}}]}}"#
        );
        assert!(model_from_json(&m).is_err());
        let f = r#"{"format":"csgs-v1","features":[{"scope":[0],"values":[0]},{"scope":[0],"values":[0]}]}"#;
        assert!(features_from_json(f).is_err());
    }
}
