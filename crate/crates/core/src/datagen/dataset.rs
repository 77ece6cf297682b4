use serde::{Deserialize, Serialize};

use crate::datagen::{MixingNetwork, SourceSpec};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// How the auxiliary variable of a dataset was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxMode {
    /// One-hot segment label.
    SegmentLabel,
    /// The previous observation `x(t − 1)`.
    LaggedObservation,
}

/// Generation record carried alongside the data and written to the JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingNetwork>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_mode: Option<AuxMode>,
    /// Per-segment modulation (`n_segments × d`): standard deviations for
    /// nonstationary sources, innovation scales for nonstationary AR sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_scales: Option<Tensor>,
}

/// Observations over time, one row per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `T × d_obs`
    pub x: Tensor,
    /// `T × d` ground-truth sources, when synthetic.
    pub s_true: Option<Tensor>,
    /// Segment index per time point, `0..n_segments`.
    pub segments: Option<Vec<usize>>,
    /// `T × k` auxiliary variable.
    pub aux: Option<Tensor>,
    pub seed: u64,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn from_observations(x: Tensor) -> Self {
        Dataset {
            x,
            s_true: None,
            segments: None,
            aux: None,
            seed: 0,
            meta: DatasetMeta::default(),
        }
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_segments(&self) -> Option<usize> {
        self.segments.as_ref().map(|s| s.iter().max().map_or(0, |m| m + 1))
    }

    /// Checks that all fields share the time axis and that segment labels
    /// cover `0..n_segments` with every segment nonempty.
    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if let Some(s) = &self.s_true {
            if s.rows() != t {
                return Err(Error::dim("s_true length", t, s.rows()));
            }
        }
        if let Some(a) = &self.aux {
            if a.rows() != t {
                return Err(Error::dim("aux length", t, a.rows()));
            }
        }
        if let Some(seg) = &self.segments {
            if seg.len() != t {
                return Err(Error::dim("segment labels length", t, seg.len()));
            }
            let k = self.n_segments().unwrap_or(0);
            let mut counts = vec![0usize; k];
            for &l in seg {
                counts[l] += 1;
            }
            if let Some(empty) = counts.iter().position(|&c| c == 0) {
                return Err(Error::Contract(format!("segment {empty} is empty")));
            }
        }
        self.x.ensure_finite("observations")?;
        Ok(())
    }

    /// Keeps time points `start..end`.
    pub fn slice_time(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            x: self.x.slice_rows(start, end),
            s_true: self.s_true.as_ref().map(|s| s.slice_rows(start, end)),
            segments: self.segments.as_ref().map(|s| s[start..end].to_vec()),
            aux: self.aux.as_ref().map(|a| a.slice_rows(start, end)),
            seed: self.seed,
            meta: self.meta.clone(),
        }
    }
}

/// Populates `aux` from the segment labels (one-hot) or from the previous
/// observation, in which case the first time point is dropped.
pub fn attach_auxiliary(dataset: &Dataset, mode: AuxMode) -> Result<Dataset> {
    match mode {
        AuxMode::SegmentLabel => {
            let seg = dataset
                .segments
                .as_ref()
                .ok_or_else(|| Error::Contract("segment-label auxiliary requires segment labels".into()))?;
            let k = dataset.n_segments().unwrap_or(0);
            let aux = Tensor::from_fn(seg.len(), k, |t, j| if seg[t] == j { 1.0 } else { 0.0 });
            let mut out = dataset.clone();
            out.aux = Some(aux);
            out.meta.aux_mode = Some(mode);
            Ok(out)
        }
        AuxMode::LaggedObservation => {
            let t = dataset.len();
            if t < 2 {
                return Err(Error::Contract(
                    "lagged auxiliary requires at least two time points".into(),
                ));
            }
            let aux = dataset.x.slice_rows(0, t - 1);
            let mut out = dataset.slice_time(1, t);
            out.aux = Some(aux);
            out.meta.aux_mode = Some(mode);
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = Tensor::from_fn(8, 2, |i, j| (i * 2 + j) as f64);
        let mut d = Dataset::from_observations(x.clone());
        d.s_true = Some(x.scale(0.5));
        d.segments = Some(vec![0, 0, 1, 1, 2, 2, 3, 3]);
        d
    }

    #[test]
    fn segment_one_hot_is_constant_within_segments() {
        let d = attach_auxiliary(&toy(), AuxMode::SegmentLabel).unwrap();
        let aux = d.aux.as_ref().unwrap();
        assert_eq!(aux.shape(), (8, 4));
        for t in 0..8 {
            assert_eq!(aux.row(t).iter().sum::<f64>(), 1.0);
            assert_eq!(aux.get(t, t / 2), 1.0);
        }
        d.validate().unwrap();
    }

    #[test]
    fn lagged_aux_is_previous_observation() {
        let base = toy();
        let d = attach_auxiliary(&base, AuxMode::LaggedObservation).unwrap();
        assert_eq!(d.len(), 7);
        let aux = d.aux.as_ref().unwrap();
        for t in 0..7 {
            assert_eq!(aux.row(t), base.x.row(t));
            assert_eq!(d.x.row(t), base.x.row(t + 1));
        }
        assert_eq!(d.segments.as_ref().unwrap()[0], 0);
        assert_eq!(d.s_true.as_ref().unwrap().rows(), 7);
    }

    #[test]
    fn segment_mode_needs_labels() {
        let d = Dataset::from_observations(Tensor::zeros(4, 1));
        assert!(matches!(
            attach_auxiliary(&d, AuxMode::SegmentLabel),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn validation_catches_empty_segments() {
        let mut d = toy();
        d.segments = Some(vec![0, 0, 2, 2, 2, 2, 2, 2]);
        assert!(d.validate().is_err());
    }
}
