use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widths of the three coefficient groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeffDims {
    pub angle: usize,
    pub translation: usize,
    pub expression: usize,
}

impl Default for CoeffDims {
    fn default() -> Self {
        CoeffDims {
            angle: 3,
            translation: 3,
            expression: 64,
        }
    }
}

impl CoeffDims {
    pub fn width(&self) -> usize {
        self.angle + self.translation + self.expression
    }

    pub fn validate(&self) -> Result<()> {
        if self.angle == 0 || self.translation == 0 || self.expression == 0 {
            return Err(Error::config(
                "coefficient group widths must all be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One frame of head-motion coefficients: angle, translation, expression.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffFrame {
    pub angle: Vec<f64>,
    pub translation: Vec<f64>,
    pub expression: Vec<f64>,
}

impl CoeffFrame {
    pub fn zeros(dims: &CoeffDims) -> CoeffFrame {
        CoeffFrame {
            angle: vec![0.0; dims.angle],
            translation: vec![0.0; dims.translation],
            expression: vec![0.0; dims.expression],
        }
    }

    /// Split a flat `[angle | translation | expression]` row.
    pub fn from_flat(dims: &CoeffDims, flat: &[f64]) -> Result<CoeffFrame> {
        if flat.len() != dims.width() {
            return Err(Error::data(format!(
                "coefficient row has {} values, expected {}",
                flat.len(),
                dims.width()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("coefficient row contains non-finite value".to_string()));
        }
        let (a, rest) = flat.split_at(dims.angle);
        let (t, e) = rest.split_at(dims.translation);
        Ok(CoeffFrame {
            angle: a.to_vec(),
            translation: t.to_vec(),
            expression: e.to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        out.extend_from_slice(&self.angle);
        out.extend_from_slice(&self.translation);
        out.extend_from_slice(&self.expression);
        out
    }

    pub fn width(&self) -> usize {
        self.angle.len() + self.translation.len() + self.expression.len()
    }

    pub fn dims(&self) -> CoeffDims {
        CoeffDims {
            angle: self.angle.len(),
            translation: self.translation.len(),
            expression: self.expression.len(),
        }
    }
}

/// Ordered sequence of coefficient frames with uniform dims.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSequence {
    dims: CoeffDims,
    frames: Vec<CoeffFrame>,
}

impl CoeffSequence {
    pub fn new(dims: CoeffDims, frames: Vec<CoeffFrame>) -> Result<CoeffSequence> {
        for (i, f) in frames.iter().enumerate() {
            if f.dims() != dims {
                return Err(Error::data(format!(
                    "frame {i} dims {:?} do not match sequence dims {:?}",
                    f.dims(),
                    dims
                )));
            }
        }
        Ok(CoeffSequence { dims, frames })
    }

    pub fn dims(&self) -> &CoeffDims {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[CoeffFrame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &CoeffFrame {
        &self.frames[i]
    }

    pub fn truncate(&mut self, len: usize) {
        self.frames.truncate(len);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CoeffDims {
        CoeffDims {
            angle: 3,
            translation: 3,
            expression: 4,
        }
    }

    #[test]
    fn flat_roundtrip() {
        let dims = small();
        let flat: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let frame = CoeffFrame::from_flat(&dims, &flat).unwrap();
        assert_eq!(frame.angle, &[0.0, 0.5, 1.0]);
        assert_eq!(frame.translation, &[1.5, 2.0, 2.5]);
        assert_eq!(frame.expression, &[3.0, 3.5, 4.0, 4.5]);
        assert_eq!(frame.to_flat(), flat);
    }

    #[test]
    fn wrong_width_rejected() {
        let dims = small();
        assert!(CoeffFrame::from_flat(&dims, &[0.0; 9]).is_err());
    }

    #[test]
    fn sequence_dims_enforced() {
        let dims = small();
        let ok = CoeffSequence::new(dims, vec![CoeffFrame::zeros(&dims); 3]);
        assert!(ok.is_ok());
        let other = CoeffDims {
            angle: 3,
            translation: 3,
            expression: 5,
        };
        let bad = CoeffSequence::new(dims, vec![CoeffFrame::zeros(&other)]);
        assert!(bad.is_err());
    }
}
