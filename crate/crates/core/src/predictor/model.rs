use std::ops::Range;

use crate::seed::Rng;
use crate::Result;

/// A flat parameter vector with a designated head (final layer) slice.
pub trait Parameters: Clone + Send + Sync {
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
    /// Indices of the final-layer parameters; everything else is the body.
    fn head_range(&self) -> Range<usize>;
    fn zeros_like(&self) -> Self;
}

/// Which part of the parameters an update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMask {
    All,
    BodyOnly,
    HeadOnly,
}

impl ParamMask {
    /// Index ranges covered by the mask, in increasing order.
    pub fn ranges(self, len: usize, head: Range<usize>) -> Vec<Range<usize>> {
        match self {
            ParamMask::All => std::iter::once(0..len).collect(),
            ParamMask::HeadOnly => vec![head],
            ParamMask::BodyOnly => {
                let mut out = Vec::with_capacity(2);
                if head.start > 0 {
                    out.push(0..head.start);
                }
                if head.end < len {
                    out.push(head.end..len);
                }
                out
            }
        }
    }

    /// Zeroes every entry outside the mask.
    pub fn apply<P: Parameters>(self, v: &mut P) {
        if self == ParamMask::All {
            return;
        }
        let len = v.values().len();
        let keep = self.ranges(len, v.head_range());
        let values = v.values_mut();
        let mut next = 0;
        for r in keep {
            values[next..r.start].iter_mut().for_each(|x| *x = 0.0);
            next = r.end;
        }
        values[next..].iter_mut().for_each(|x| *x = 0.0);
    }
}

/// A differentiable regressor over inputs of type `Input`, trained with the
/// mean squared error.
pub trait Regressor: Sync {
    type Params: Parameters;
    type Input: Sync;

    /// Batch MSE and its gradient. Dropout (if the model has any) is active
    /// only when `dropout` is given.
    fn loss_grad(
        &self,
        params: &Self::Params,
        inputs: &[&Self::Input],
        targets: &[f64],
        dropout: Option<&mut Rng>,
    ) -> Result<(f64, Self::Params)>;

    /// Hessian of the dropout-free batch MSE times `direction`.
    fn loss_hvp(
        &self,
        params: &Self::Params,
        inputs: &[&Self::Input],
        targets: &[f64],
        direction: &Self::Params,
    ) -> Result<Self::Params>;

    /// Deterministic (eval-mode) predictions.
    fn predict(&self, params: &Self::Params, inputs: &[&Self::Input]) -> Result<Vec<f64>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_ranges() {
        assert_eq!(ParamMask::BodyOnly.ranges(10, 7..10), vec![0..7]);
        assert_eq!(ParamMask::BodyOnly.ranges(10, 0..3), vec![3..10]);
        assert_eq!(ParamMask::BodyOnly.ranges(10, 2..4), vec![0..2, 4..10]);
        assert_eq!(ParamMask::HeadOnly.ranges(10, 7..10), vec![7..10]);
        assert_eq!(ParamMask::All.ranges(10, 7..10), vec![0..10]);
    }
}
