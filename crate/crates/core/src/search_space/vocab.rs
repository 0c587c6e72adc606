use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Convolution,
    Pooling,
    Linear,
    Skip,
    Zeroize,
    Input,
    Output,
    Global,
}

impl OpKind {
    /// Input, output and global nodes are structural; they never fill a slot.
    pub fn is_special(self) -> bool {
        matches!(self, OpKind::Input | OpKind::Output | OpKind::Global)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OpKind::Convolution => "convolution",
            OpKind::Pooling => "pooling",
            OpKind::Linear => "linear",
            OpKind::Skip => "skip",
            OpKind::Zeroize => "zeroize",
            OpKind::Input => "input",
            OpKind::Output => "output",
            OpKind::Global => "global",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub id: usize,
    pub name: String,
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilation: Option<u32>,
}

/// An operation as it appears in an op-set or a space file: either a bare
/// name resolved against the built-in table, or a full inline declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpDecl {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<OpKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilation: Option<u32>,
}

impl OpDecl {
    pub fn named(name: impl Into<String>) -> Self {
        OpDecl {
            name: name.into(),
            kind: None,
            kernel: None,
            dilation: None,
        }
    }

    pub fn inline(
        name: impl Into<String>,
        kind: OpKind,
        kernel: Option<u32>,
        dilation: Option<u32>,
    ) -> Self {
        OpDecl {
            name: name.into(),
            kind: Some(kind),
            kernel,
            dilation,
        }
    }

    fn resolve(&self) -> Result<(OpKind, Option<u32>, Option<u32>)> {
        let attrs = match self.kind {
            Some(kind) => (kind, self.kernel, self.dilation),
            None => builtin_operation(&self.name)
                .ok_or_else(|| Error::UnknownOperation(self.name.clone()))?,
        };
        check_attributes(&self.name, attrs)?;
        Ok(attrs)
    }
}

fn check_attributes(
    name: &str,
    (kind, kernel, dilation): (OpKind, Option<u32>, Option<u32>),
) -> Result<()> {
    let conflict = |detail: &str| Error::Conflict {
        name: name.to_string(),
        detail: detail.to_string(),
    };
    match kind {
        OpKind::Convolution => {
            if kernel.is_none() || dilation.is_none() {
                return Err(conflict("convolution requires kernel and dilation"));
            }
        }
        OpKind::Pooling => {
            if kernel.is_none() {
                return Err(conflict("pooling requires a kernel"));
            }
            if dilation.is_some() {
                return Err(conflict("pooling takes no dilation"));
            }
        }
        _ => {
            if kernel.is_some() || dilation.is_some() {
                return Err(conflict(
                    "only convolution and pooling carry kernel/dilation",
                ));
            }
        }
    }
    if kernel == Some(0) || dilation == Some(0) {
        return Err(conflict("kernel and dilation must be positive"));
    }
    Ok(())
}

/// Attributes of the operations shared by the four cell-based benchmarks,
/// plus the three structural node types.
pub fn builtin_operation(name: &str) -> Option<(OpKind, Option<u32>, Option<u32>)> {
    use OpKind::*;
    let conv = |k, d| Some((Convolution, Some(k), Some(d)));
    match name {
        "conv1-d1" => conv(1, 1),
        "conv3-d1" => conv(3, 1),
        "conv5-d1" => conv(5, 1),
        "conv5-d2" => conv(5, 2),
        "conv7-d1" => conv(7, 1),
        "conv7-d2" => conv(7, 2),
        "linear" => Some((Linear, None, None)),
        "avgpool" => Some((Pooling, Some(3), None)),
        "maxpool" => Some((Pooling, Some(3), None)),
        "skip" => Some((Skip, None, None)),
        "zeroize" => Some((Zeroize, None, None)),
        "input" => Some((Input, None, None)),
        "output" => Some((Output, None, None)),
        "global" => Some((Global, None, None)),
        _ => None,
    }
}

/// Operation sets of NB101, NB201, TB101-micro and NB-ASR, in that order.
pub fn benchmark_op_sets() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("nb101", vec!["conv1-d1", "conv3-d1", "maxpool"]),
        (
            "nb201",
            vec!["conv1-d1", "conv3-d1", "avgpool", "skip", "zeroize"],
        ),
        ("tb101", vec!["conv1-d1", "conv3-d1", "skip", "zeroize"]),
        (
            "nbasr",
            vec![
                "conv5-d1", "conv5-d2", "conv7-d1", "conv7-d2", "linear", "skip", "zeroize",
            ],
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpVocabulary {
    operations: Vec<Operation>,
    index: HashMap<String, usize>,
}

impl OpVocabulary {
    /// The 14-entry vocabulary unifying the four benchmark op sets.
    pub fn unified() -> Self {
        let sets: Vec<Vec<OpDecl>> = benchmark_op_sets()
            .into_iter()
            .map(|(_, ops)| ops.into_iter().map(OpDecl::named).collect())
            .collect();
        build_unified_vocabulary(&sets).expect("built-in op sets are consistent")
    }

    pub fn len(&self) -> usize {
        self.operations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operations.is_empty()
    }

    pub fn operations(&self) -> &[Operation] {
        &self.operations
    }

    pub fn get(&self, id: usize) -> Option<&Operation> {
        self.operations.get(id)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn special(&self, kind: OpKind) -> usize {
        self.operations
            .iter()
            .find(|op| op.kind == kind)
            .map(|op| op.id)
            .expect("vocabulary always carries input/output/global")
    }

    pub fn input_id(&self) -> usize {
        self.special(OpKind::Input)
    }

    pub fn output_id(&self) -> usize {
        self.special(OpKind::Output)
    }

    pub fn global_id(&self) -> usize {
        self.special(OpKind::Global)
    }

    pub fn searchable(&self) -> impl Iterator<Item = &Operation> {
        self.operations.iter().filter(|op| !op.kind.is_special())
    }

    pub fn to_decls(&self) -> Vec<OpDecl> {
        self.operations
            .iter()
            .map(|op| OpDecl::inline(op.name.clone(), op.kind, op.kernel, op.dilation))
            .collect()
    }
}

/// Union of several op sets in first-seen order, with input, output and
/// global appended last.
///
/// Special names inside the sets are accepted and ignored (they are always
/// appended at the end). A name declared twice with different attributes is a
/// conflict.
pub fn build_unified_vocabulary(sets: &[Vec<OpDecl>]) -> Result<OpVocabulary> {
    let mut operations: Vec<Operation> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    let mut push = |name: &str,
                    (kind, kernel, dilation): (OpKind, Option<u32>, Option<u32>)|
     -> Result<()> {
        if let Some(&id) = index.get(name) {
            let existing = &operations[id];
            if (existing.kind, existing.kernel, existing.dilation) != (kind, kernel, dilation) {
                return Err(Error::Conflict {
                    name: name.to_string(),
                    detail: format!(
                        "{}/{:?}/{:?} vs {}/{:?}/{:?}",
                        existing.kind, existing.kernel, existing.dilation, kind, kernel, dilation
                    ),
                });
            }
            return Ok(());
        }
        let id = operations.len();
        operations.push(Operation {
            id,
            name: name.to_string(),
            kind,
            kernel,
            dilation,
        });
        index.insert(name.to_string(), id);
        Ok(())
    };

    let mut specials: Vec<(String, OpKind)> = Vec::new();
    for decl in sets.iter().flatten() {
        let attrs = decl.resolve()?;
        if attrs.0.is_special() {
            if let Some((prev, _)) = specials.iter().find(|(_, k)| *k == attrs.0) {
                if *prev != decl.name {
                    return Err(Error::Conflict {
                        name: decl.name.clone(),
                        detail: format!("second {} node type (already `{prev}`)", attrs.0),
                    });
                }
            } else {
                specials.push((decl.name.clone(), attrs.0));
            }
            continue;
        }
        push(&decl.name, attrs)?;
    }
    for kind in [OpKind::Input, OpKind::Output, OpKind::Global] {
        let name = specials
            .iter()
            .find(|(_, k)| *k == kind)
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| kind.to_string());
        push(&name, (kind, None, None))?;
    }
    Ok(OpVocabulary { operations, index })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(names: &[&str]) -> Vec<OpDecl> {
        names.iter().map(|n| OpDecl::named(*n)).collect()
    }

    #[test]
    fn unified_vocabulary_has_eleven_searchable_ops() {
        let vocab = OpVocabulary::unified();
        assert_eq!(vocab.searchable().count(), 11);
        assert_eq!(vocab.len(), 14);
        let names: Vec<_> = vocab.operations().iter().map(|o| o.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "conv1-d1", "conv3-d1", "maxpool", "avgpool", "skip", "zeroize", "conv5-d1",
                "conv5-d2", "conv7-d1", "conv7-d2", "linear", "input", "output", "global"
            ]
        );
        assert_eq!(vocab.global_id(), 13);
    }

    #[test]
    fn small_unions() {
        let abc = vec![
            OpDecl::inline("a", OpKind::Linear, None, None),
            OpDecl::inline("b", OpKind::Skip, None, None),
            OpDecl::inline("c", OpKind::Zeroize, None, None),
        ];
        let ad = vec![
            OpDecl::inline("a", OpKind::Linear, None, None),
            OpDecl::inline("d", OpKind::Pooling, Some(3), None),
        ];
        let vocab = build_unified_vocabulary(&[abc, ad]).unwrap();
        assert_eq!(vocab.searchable().count(), 4);
        assert_eq!(vocab.len(), 7);

        let single = build_unified_vocabulary(&[named(&["conv3-d1"])]).unwrap();
        assert_eq!(single.len(), 4);
    }

    #[test]
    fn conflicting_attributes_are_rejected() {
        let a = vec![OpDecl::named("conv3-d1")];
        let b = vec![OpDecl::inline(
            "conv3-d1",
            OpKind::Convolution,
            Some(3),
            Some(2),
        )];
        assert!(matches!(
            build_unified_vocabulary(&[a, b]),
            Err(Error::Conflict { .. })
        ));
    }

    #[test]
    fn attribute_rules() {
        let bad = vec![OpDecl::inline("p", OpKind::Pooling, Some(3), Some(1))];
        assert!(build_unified_vocabulary(&[bad]).is_err());
        let bad = vec![OpDecl::inline("s", OpKind::Skip, Some(3), None)];
        assert!(build_unified_vocabulary(&[bad]).is_err());
        let unknown = vec![OpDecl::named("conv9-d9")];
        assert!(matches!(
            build_unified_vocabulary(&[unknown]),
            Err(Error::UnknownOperation(_))
        ));
    }

    #[test]
    fn union_is_order_deterministic() {
        let sets = vec![named(&["skip", "conv1-d1"]), named(&["zeroize", "skip"])];
        let a = build_unified_vocabulary(&sets).unwrap();
        let b = build_unified_vocabulary(&sets).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id_of("zeroize"), Some(2));
    }
}
