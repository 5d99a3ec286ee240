//! Labeled feature data for supervised training, with delimited-text
//! ingestion (`f0..fm` feature columns, then `l0..lk` label columns).

use serde::{Deserialize, Serialize};

use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Regression,
    Classification,
}

/// Label storage: real vectors for regression, class indices for
/// classification (one-hot encoding happens inside the training objectives).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Regression(Vec<Vec<f64>>),
    Classes { indices: Vec<usize>, n_classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Labels,
}

impl Dataset {
    pub fn regression(features: Vec<Vec<f64>>, labels: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let d = Dataset {
            features,
            labels: Labels::Regression(labels),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn classification(
        features: Vec<Vec<f64>>,
        classes: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, OracleError> {
        let d = Dataset {
            features,
            labels: Labels::Classes {
                indices: classes,
                n_classes,
            },
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), OracleError> {
        if self.features.is_empty() {
            return Err(OracleError::EmptyDataset);
        }
        let fd = self.features[0].len();
        if self.features.iter().any(|f| f.len() != fd) {
            return Err(OracleError::InvalidSpec {
                context: "ragged feature vectors".into(),
            });
        }
        match &self.labels {
            Labels::Regression(l) => {
                if l.len() != self.features.len() {
                    return Err(OracleError::InvalidSpec {
                        context: "feature/label count mismatch".into(),
                    });
                }
                let ld = l.first().map(|v| v.len()).unwrap_or(0);
                if ld == 0 || l.iter().any(|v| v.len() != ld) {
                    return Err(OracleError::InvalidSpec {
                        context: "ragged or empty label vectors".into(),
                    });
                }
            }
            Labels::Classes { indices, n_classes } => {
                if indices.len() != self.features.len() {
                    return Err(OracleError::InvalidSpec {
                        context: "feature/label count mismatch".into(),
                    });
                }
                if *n_classes == 0 || indices.iter().any(|&c| c >= *n_classes) {
                    return Err(OracleError::InvalidSpec {
                        context: "class index out of range".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn kind(&self) -> LabelKind {
        match self.labels {
            Labels::Regression(_) => LabelKind::Regression,
            Labels::Classes { .. } => LabelKind::Classification,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    /// Regression: label vector length. Classification: class count.
    pub fn label_dim(&self) -> usize {
        match &self.labels {
            Labels::Regression(l) => l[0].len(),
            Labels::Classes { n_classes, .. } => *n_classes,
        }
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn regression_labels(&self) -> Option<&[Vec<f64>]> {
        match &self.labels {
            Labels::Regression(l) => Some(l),
            _ => None,
        }
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Classes { indices, .. } => Some(indices),
            _ => None,
        }
    }

    /// Subset by sample indices (used for train/test/validation splits).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let features = idx.iter().map(|&i| self.features[i].clone()).collect();
        let labels = match &self.labels {
            Labels::Regression(l) => Labels::Regression(idx.iter().map(|&i| l[i].clone()).collect()),
            Labels::Classes { indices, n_classes } => Labels::Classes {
                indices: idx.iter().map(|&i| indices[i]).collect(),
                n_classes: *n_classes,
            },
        };
        Dataset { features, labels }
    }

    /// Single-label-dimension view of a regression dataset.
    pub fn label_column(&self, dim: usize) -> Vec<f64> {
        match &self.labels {
            Labels::Regression(l) => l.iter().map(|v| v[dim]).collect(),
            Labels::Classes { indices, .. } => indices.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Parses delimited text: a header row naming columns `f0..f{m},l0..l{k}`
    /// followed by one row per sample. Classification datasets use a single
    /// `l0` column holding the class index.
    pub fn from_delimited(text: &str, kind: LabelKind) -> Result<Self, OracleError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(OracleError::EmptyDataset)?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let n_features = names.iter().take_while(|n| n.starts_with('f')).count();
        let n_labels = names.len() - n_features;
        if n_features == 0 || n_labels == 0 || !names[n_features..].iter().all(|n| n.starts_with('l')) {
            return Err(OracleError::Parse {
                line: 1,
                context: format!("header must name f… then l… columns, got `{header}`"),
            });
        }

        let mut features = Vec::new();
        let mut raw_labels = Vec::new();
        for (lineno, line) in lines {
            let cells: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let cells = cells.map_err(|e| OracleError::Parse {
                line: lineno + 1,
                context: e.to_string(),
            })?;
            if cells.len() != names.len() {
                return Err(OracleError::Parse {
                    line: lineno + 1,
                    context: format!("expected {} columns, got {}", names.len(), cells.len()),
                });
            }
            features.push(cells[..n_features].to_vec());
            raw_labels.push(cells[n_features..].to_vec());
        }

        match kind {
            LabelKind::Regression => Dataset::regression(features, raw_labels),
            LabelKind::Classification => {
                let indices: Vec<usize> = raw_labels.iter().map(|l| l[0].round() as usize).collect();
                let n_classes = indices.iter().copied().max().map(|m| m + 1).unwrap_or(0);
                Dataset::classification(features, indices, n_classes)
            }
        }
    }

    /// Inverse of [`from_delimited`](Self::from_delimited), with full-precision floats.
    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        let label_cols = match &self.labels {
            Labels::Regression(l) => l[0].len(),
            Labels::Classes { .. } => 1,
        };
        let header: Vec<String> = (0..self.feature_dim())
            .map(|i| format!("f{i}"))
            .chain((0..label_cols).map(|i| format!("l{i}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let mut cells: Vec<String> = self.features[i].iter().map(|v| format!("{v:.17e}")).collect();
            match &self.labels {
                Labels::Regression(l) => cells.extend(l[i].iter().map(|v| format!("{v:.17e}"))),
                Labels::Classes { indices, .. } => cells.push(format!("{}", indices[i])),
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(
            Dataset::regression(vec![], vec![]),
            Err(OracleError::EmptyDataset)
        ));
        assert!(Dataset::regression(vec![vec![1.0], vec![1.0, 2.0]], vec![vec![0.0]; 2]).is_err());
        assert!(Dataset::regression(vec![vec![1.0]], vec![]).is_err());
    }

    #[test]
    fn delimited_round_trip() {
        let d = Dataset::regression(
            vec![vec![0.25, -1.0], vec![3.5, 0.125]],
            vec![vec![1.0], vec![-2.0]],
        )
        .unwrap();
        let text = d.to_delimited();
        assert!(text.starts_with("f0,f1,l0\n"));
        let back = Dataset::from_delimited(&text, LabelKind::Regression).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn classification_ingestion() {
        let text = "f0,l0\n0.1,0\n0.9,1\n0.4,0\n";
        let d = Dataset::from_delimited(text, LabelKind::Classification).unwrap();
        assert_eq!(d.kind(), LabelKind::Classification);
        assert_eq!(d.label_dim(), 2);
        assert_eq!(d.class_labels().unwrap(), &[0, 1, 0]);
    }

    #[test]
    fn bad_header_is_rejected() {
        let r = Dataset::from_delimited("a,b\n1,2\n", LabelKind::Regression);
        assert!(matches!(r, Err(OracleError::Parse { line: 1, .. })));
    }
}
