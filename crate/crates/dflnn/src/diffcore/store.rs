use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One named slice of the flat parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamSlice {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat array of learnable parameters plus its named layout. The single
/// mutable object during training; all evaluations read it immutably.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    pub values: Vec<f64>,
    pub layout: Vec<ParamSlice>,
}

impl ParameterStore {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, name: &str) -> Result<&ParamSlice> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Layout(format!("no parameter slice named `{name}`")))
    }

    pub fn values_of(&self, name: &str) -> Result<&[f64]> {
        let s = self.slice(name)?;
        Ok(&self.values[s.range()])
    }

    /// Check the layout invariants: slices in bounds, pairwise disjoint, and
    /// jointly covering the full array.
    pub fn validate(&self) -> Result<()> {
        let mut spans: Vec<(usize, usize)> = self
            .layout
            .iter()
            .map(|s| (s.offset, s.offset + s.len()))
            .collect();
        spans.sort_unstable();
        let mut end = 0;
        for (a, b) in spans {
            if a != end {
                return Err(Error::Layout(format!(
                    "parameter slices overlap or leave a gap at offset {a}"
                )));
            }
            end = b;
        }
        if end != self.values.len() {
            return Err(Error::Layout(format!(
                "layout covers {end} values but the store holds {}",
                self.values.len()
            )));
        }
        Ok(())
    }
}

/// Incremental layout builder used while wiring up networks.
#[derive(Default)]
pub struct StoreBuilder {
    values: Vec<f64>,
    layout: Vec<ParamSlice>,
}

impl StoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserve a named slice, returning its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], init: &[f64]) -> usize {
        let offset = self.values.len();
        let len: usize = shape.iter().product();
        assert_eq!(init.len(), len, "init length must match shape");
        self.values.extend_from_slice(init);
        self.layout.push(ParamSlice {
            name: name.into(),
            offset,
            shape: shape.to_vec(),
        });
        offset
    }

    pub fn finish(self) -> ParameterStore {
        let store = ParameterStore {
            values: self.values,
            layout: self.layout,
        };
        debug_assert!(store.validate().is_ok());
        store
    }
}

/// Concatenate several stores into one flat store, prefixing slice names.
/// Returns the combined store and the offset each input landed at.
pub fn concat_stores(parts: &[(&str, &ParameterStore)]) -> (ParameterStore, Vec<usize>) {
    let mut values = Vec::new();
    let mut layout = Vec::new();
    let mut offsets = Vec::with_capacity(parts.len());
    for (prefix, store) in parts {
        let base = values.len();
        offsets.push(base);
        values.extend_from_slice(&store.values);
        for s in &store.layout {
            layout.push(ParamSlice {
                name: format!("{prefix}.{}", s.name),
                offset: base + s.offset,
                shape: s.shape.clone(),
            });
        }
    }
    (ParameterStore { values, layout }, offsets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_produces_valid_layout() {
        let mut b = StoreBuilder::new();
        b.push("w", &[2, 3], &[1.0; 6]);
        b.push("b", &[3], &[0.0; 3]);
        let s = b.finish();
        assert_eq!(s.len(), 9);
        s.validate().unwrap();
        assert_eq!(s.values_of("b").unwrap(), &[0.0; 3]);
        assert!(s.values_of("nope").is_err());
    }

    #[test]
    fn validate_rejects_overlap() {
        let s = ParameterStore {
            values: vec![0.0; 4],
            layout: vec![
                ParamSlice {
                    name: "a".into(),
                    offset: 0,
                    shape: vec![3],
                },
                ParamSlice {
                    name: "b".into(),
                    offset: 2,
                    shape: vec![2],
                },
            ],
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn concat_re_prefixes() {
        let mut b = StoreBuilder::new();
        b.push("w", &[2], &[1.0, 2.0]);
        let s1 = b.finish();
        let mut b = StoreBuilder::new();
        b.push("w", &[1], &[3.0]);
        let s2 = b.finish();
        let (joint, offs) = concat_stores(&[("lag", &s1), ("force", &s2)]);
        joint.validate().unwrap();
        assert_eq!(offs, vec![0, 2]);
        assert_eq!(joint.values_of("force.w").unwrap(), &[3.0]);
    }
}
