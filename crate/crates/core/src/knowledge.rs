//! Temporal envelopes and knowledge infusion.
//!
//! A clip of `n` segments carries one label `v`. An envelope `f(1..n)`
//! states how strongly each segment expresses that label, so a segment-wise
//! network can train on `(g_i, f(i)·v)` pairs and the clip value is
//! recovered afterwards by undoing the scaling and averaging.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dataset::Clip;
use crate::error::{invalid, Error, Result};
use crate::linalg::Vector;

/// Segments with `f(i)` at or below this are left out of reconstruction.
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    /// `f(i) = 1`; plain FFNN targets.
    Constant,
    /// `0.75, 0.9, 1, …, 1, 0.9, 0.75`
    Fn1,
    /// `0.3, 0.6, 1, …, 1, 0.6, 0.3`
    Fn2,
    /// `0.1, 0.2, 1, …, 1, 0.2, 0.1`
    Fn3,
    /// `f(i) = (i - 1) / (n - 1)`
    Linear,
    /// Explicit `f(1..n)`; only valid for clips of exactly this length.
    Custom(Vec<f64>),
}

impl Envelope {
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("custom envelope"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("custom envelope".into()));
        }
        Ok(Envelope::Custom(values))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Envelope::Constant => "constant",
            Envelope::Fn1 => "fn1",
            Envelope::Fn2 => "fn2",
            Envelope::Fn3 => "fn3",
            Envelope::Linear => "linear",
            Envelope::Custom(_) => "custom",
        }
    }

    /// Tabulated fade values for the Fn family: `(f(1), f(2))`, mirrored at
    /// the end.
    fn fade(&self) -> Option<(f64, f64)> {
        match self {
            Envelope::Fn1 => Some((0.75, 0.9)),
            Envelope::Fn2 => Some((0.3, 0.6)),
            Envelope::Fn3 => Some((0.1, 0.2)),
            _ => None,
        }
    }

    /// Checks that the envelope is defined for clips of `n` segments.
    pub fn check_len(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Empty("clip"));
        }
        match self {
            Envelope::Constant => Ok(()),
            Envelope::Fn1 | Envelope::Fn2 | Envelope::Fn3 if n < 4 => Err(invalid(format!(
                "{} needs at least 4 segments, got {n}",
                self.name()
            ))),
            Envelope::Fn1 | Envelope::Fn2 | Envelope::Fn3 => Ok(()),
            Envelope::Linear if n < 2 => Err(invalid("linear envelope needs at least 2 segments")),
            Envelope::Linear => Ok(()),
            Envelope::Custom(v) if v.len() != n => Err(Error::DimensionMismatch {
                what: "custom envelope length vs clip segments",
                expected: v.len(),
                found: n,
            }),
            Envelope::Custom(_) => Ok(()),
        }
    }

    /// `f(i)` for `1 ≤ i ≤ n`.
    pub fn eval(&self, i: usize, n: usize) -> Result<f64> {
        self.check_len(n)?;
        if i == 0 || i > n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        Ok(self.eval_unchecked(i, n))
    }

    fn eval_unchecked(&self, i: usize, n: usize) -> f64 {
        if let Some((first, second)) = self.fade() {
            let from_end = n + 1 - i;
            return match i.min(from_end) {
                1 => first,
                2 => second,
                _ => 1.0,
            };
        }
        match self {
            Envelope::Linear => (i - 1) as f64 / (n - 1) as f64,
            Envelope::Custom(v) => v[i - 1],
            _ => 1.0,
        }
    }

    /// `f(1..=n)`.
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        self.check_len(n)?;
        Ok((1..=n).map(|i| self.eval_unchecked(i, n)).collect())
    }
}

impl fmt::Display for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Envelope {
    type Err = Error;

    /// Named envelopes only; custom ones come from their values.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" | "ffnn" => Ok(Envelope::Constant),
            "fn1" => Ok(Envelope::Fn1),
            "fn2" => Ok(Envelope::Fn2),
            "fn3" => Ok(Envelope::Fn3),
            "linear" => Ok(Envelope::Linear),
            other => Err(invalid(format!("unknown envelope `{other}`"))),
        }
    }
}

/// Per-segment training pairs `(g_i, f(i)·v)` in temporal order.
pub fn infuse_labels(clip: &Clip, env: &Envelope) -> Result<Vec<(Vector, f64)>> {
    let n = clip.segments.len();
    if !clip.label.is_finite() {
        return Err(Error::NonFinite("clip label".into()));
    }
    let f = env.values(n)?;
    Ok(clip
        .segments
        .iter()
        .zip(f)
        .map(|(s, fi)| (s.features.clone(), fi * clip.label))
        .collect())
}

/// How per-segment predictions combine into one clip value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reconstruction {
    /// Mean of `p_i / f(i)` over the kept segments.
    #[default]
    Mean,
    /// Sum of `p_i / f(i)` over the kept segments; scales with `n`.
    Sum,
}

/// Clip value from per-segment predictions: the mean of `p_i / f(i)` over
/// segments with `f(i) > epsilon`.
pub fn reconstruct_clip(predictions: &[f64], env: &Envelope, epsilon: f64) -> Result<f64> {
    reconstruct_clip_with(predictions, env, epsilon, Reconstruction::Mean)
}

pub fn reconstruct_clip_with(
    predictions: &[f64],
    env: &Envelope,
    epsilon: f64,
    mode: Reconstruction,
) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(invalid("epsilon must be non-negative"));
    }
    let f = env.values(predictions.len())?;
    let mut sum = 0.0;
    let mut kept = 0usize;
    for (p, fi) in predictions.iter().zip(&f) {
        if *fi > epsilon {
            sum += p / fi;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::DegenerateEnvelope);
    }
    Ok(match mode {
        Reconstruction::Mean => sum / kept as f64,
        Reconstruction::Sum => sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Segment;
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    fn clip(n: usize, label: f64) -> Clip {
        Clip {
            id: String::from("c"),
            segments: (1..=n)
                .map(|i| Segment {
                    index: i,
                    features: Vector::new(vec![i as f64, 1.0]).unwrap(),
                })
                .collect(),
            label,
        }
    }

    #[test]
    fn fn_family_tables() {
        assert_eq!(
            Envelope::Fn1.values(10).unwrap(),
            vec![0.75, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.9, 0.75]
        );
        assert_eq!(
            Envelope::Fn2.values(10).unwrap(),
            vec![0.3, 0.6, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.6, 0.3]
        );
        assert_eq!(
            Envelope::Fn3.values(10).unwrap(),
            vec![0.1, 0.2, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.2, 0.1]
        );
        assert_eq!(Envelope::Fn2.values(4).unwrap(), vec![0.3, 0.6, 0.6, 0.3]);
        assert_eq!(Envelope::Fn1.eval(6, 12).unwrap(), 1.0);
    }

    #[test]
    fn linear_and_constant() {
        assert_eq!(Envelope::Linear.eval(1, 10).unwrap(), 0.0);
        assert_eq!(Envelope::Linear.eval(10, 10).unwrap(), 1.0);
        assert_eq!(Envelope::Linear.eval(4, 10).unwrap(), 3.0 / 9.0);
        for i in 1..=7 {
            assert_eq!(Envelope::Constant.eval(i, 7).unwrap(), 1.0);
        }
    }

    #[test]
    fn eval_errors() {
        assert!(matches!(
            Envelope::Fn1.eval(0, 10),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            Envelope::Fn1.eval(11, 10),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(Envelope::Fn2.eval(1, 3).is_err());
        assert!(Envelope::Linear.eval(1, 1).is_err());
        let c = Envelope::custom(vec![0.5, 1.0, 0.5]).unwrap();
        assert_eq!(c.eval(3, 3).unwrap(), 0.5);
        assert!(c.values(4).is_err());
        assert!(Envelope::custom(vec![f64::NAN]).is_err());
    }

    #[test]
    fn infusion() {
        let pairs = infuse_labels(&clip(10, 2.0), &Envelope::Fn2).unwrap();
        let targets: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        assert_eq!(targets, vec![0.6, 1.2, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 1.2, 0.6]);
        for (i, (g, _)) in pairs.iter().enumerate() {
            assert_eq!(g[0], (i + 1) as f64);
        }
        let zero = infuse_labels(&clip(9, 0.0), &Envelope::Fn3).unwrap();
        assert!(zero.iter().all(|p| p.1 == 0.0));
        let flat = infuse_labels(&clip(8, 3.3), &Envelope::Constant).unwrap();
        assert!(flat.iter().all(|p| p.1 == 3.3));
        assert!(infuse_labels(&clip(5, 1.0), &Envelope::custom(vec![1.0; 4]).unwrap()).is_err());
    }

    #[test]
    fn reconstruction_cases() {
        let f = Envelope::Fn2.values(10).unwrap();
        let preds: Vec<f64> = f.iter().map(|x| x * 2.5).collect();
        assert!((reconstruct_clip(&preds, &Envelope::Fn2, 1e-9).unwrap() - 2.5).abs() < 1e-15);

        let preds = [1.0, 2.0, 4.0, 5.0];
        assert_eq!(reconstruct_clip(&preds, &Envelope::Constant, 1e-9).unwrap(), 3.0);

        // segment 1 has f = 0 and drops out; the other nine give 3.0 each
        let f = Envelope::Linear.values(10).unwrap();
        let preds: Vec<f64> = f.iter().map(|x| x * 3.0).collect();
        let v = reconstruct_clip(&preds, &Envelope::Linear, 1e-9).unwrap();
        assert!((v - 3.0).abs() < 1e-14);

        let sum = reconstruct_clip_with(&[1.0; 4], &Envelope::Constant, 0.0, Reconstruction::Sum).unwrap();
        assert_eq!(sum, 4.0);
    }

    #[test]
    fn reconstruction_errors() {
        let zeros = Envelope::custom(vec![0.0, 0.0]).unwrap();
        assert_eq!(
            reconstruct_clip(&[1.0, 1.0], &zeros, 1e-9),
            Err(Error::DegenerateEnvelope)
        );
        assert!(reconstruct_clip(&[1.0; 3], &Envelope::Fn1, 1e-9).is_err());
        assert!(reconstruct_clip(&[1.0; 5], &Envelope::Fn1, -1.0).is_err());
    }

    fn named() -> impl Strategy<Value = Envelope> {
        prop_oneof![
            Just(Envelope::Constant),
            Just(Envelope::Fn1),
            Just(Envelope::Fn2),
            Just(Envelope::Fn3),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(v in 0.0f64..5.0, env in named(), n in 8usize..=12) {
            let c = clip(n, v);
            let targets: Vec<f64> = infuse_labels(&c, &env).unwrap().into_iter().map(|p| p.1).collect();
            let back = reconstruct_clip(&targets, &env, DEFAULT_EPSILON).unwrap();
            prop_assert!((back - v).abs() <= 1e-12);
        }

        #[test]
        fn infusion_keeps_order_and_count(v in -5.0f64..5.0, env in named(), n in 4usize..=16) {
            let c = clip(n, v);
            let pairs = infuse_labels(&c, &env).unwrap();
            prop_assert_eq!(pairs.len(), n);
            for (i, (g, t)) in pairs.iter().enumerate() {
                prop_assert_eq!(g, &c.segments[i].features);
                prop_assert_eq!(*t, env.eval(i + 1, n).unwrap() * v);
            }
        }
    }
}
