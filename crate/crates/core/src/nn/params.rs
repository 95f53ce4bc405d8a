use std::ops::Range;

use crate::error::{check_len, Error, Result};

/// Which tensor of a layer a flat index range belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorKind {
    Weight,
    Bias,
    NormGain,
    NormShift,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub layer: usize,
    pub kind: TensorKind,
    pub range: Range<usize>,
}

/// Flat copy of every trainable parameter of a network together with the
/// layout needed to map entries back to tensors and the mask of entries that
/// receive exploration noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Slot>,
    mask: Vec<bool>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Vec<Slot>) -> Result<Self> {
        let total = layout.iter().map(|s| s.range.len()).sum::<usize>();
        check_len("param layout", total, values.len())?;
        let mask = vec![true; values.len()];
        Ok(Self {
            values,
            layout,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        check_len("perturbable mask", self.values.len(), mask.len())?;
        self.mask = mask;
        Ok(())
    }

    /// Restricts the mask to slots for which `keep` returns true.
    pub fn mask_slots(&mut self, keep: impl Fn(&Slot) -> bool) {
        for slot in &self.layout {
            let on = keep(slot);
            for m in &mut self.mask[slot.range.clone()] {
                *m = *m && on;
            }
        }
    }

    /// Returns a copy holding `values` with this vector's layout and mask.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_len("param values", self.values.len(), values.len())?;
        Ok(Self {
            values,
            layout: self.layout.clone(),
            mask: self.mask.clone(),
        })
    }

    /// Concatenates several vectors; layer indices of later parts are offset
    /// so slots stay distinguishable.
    pub fn concat(parts: &[&ParamVector]) -> Self {
        let mut values = Vec::new();
        let mut layout = Vec::new();
        let mut mask = Vec::new();
        let mut layer_offset = 0;
        for p in parts {
            let base = values.len();
            values.extend_from_slice(&p.values);
            mask.extend_from_slice(&p.mask);
            let mut max_layer = 0;
            for s in &p.layout {
                max_layer = max_layer.max(s.layer + 1);
                layout.push(Slot {
                    layer: s.layer + layer_offset,
                    kind: s.kind,
                    range: s.range.start + base..s.range.end + base,
                });
            }
            layer_offset += max_layer;
        }
        Self {
            values,
            layout,
            mask,
        }
    }

    pub fn slot(&self, layer: usize, kind: TensorKind) -> Option<&Slot> {
        self.layout.iter().find(|s| s.layer == layer && s.kind == kind)
    }

    pub fn ensure_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::InvalidArgument("parameter layouts differ".into()))
        }
    }
}
