use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::affinity::AmConfig;
use crate::{Error, Result};

/// Clip-level aggregation of frame probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    LinearSoftmax,
    Max,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::LinearSoftmax => "linear_softmax",
            Pooling::Max => "max",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear_softmax" | "linear-softmax" => Ok(Pooling::LinearSoftmax),
            "max" => Ok(Pooling::Max),
            other => Err(Error::config(format!("unknown pooling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub classes: usize,
    pub mel_bands: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// Time down-sampling after each conv block; the running product must
    /// pass through 2 and end at 4.
    pub time_down_factors: Vec<usize>,
    pub freq_down_factors: Vec<usize>,
    pub lp_pool_p: f64,
    pub gru_hidden: usize,
    pub leaky_slope: f64,
    pub pooling: Pooling,
    pub am: AmConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            mel_bands: 64,
            conv_channels: vec![32, 64, 128],
            kernel: 3,
            time_down_factors: vec![2, 2, 1],
            freq_down_factors: vec![4, 4, 4],
            lp_pool_p: 4.0,
            gru_hidden: 128,
            leaky_slope: 0.1,
            pooling: Pooling::LinearSoftmax,
            am: AmConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Narrow widths for CPU-minute training.
    pub fn desk(classes: usize) -> Self {
        Self {
            classes,
            conv_channels: vec![8, 16, 32],
            gru_hidden: 32,
            ..Self::default()
        }
    }

    pub fn blocks(&self) -> usize {
        self.conv_channels.len()
    }

    /// Time resolution (as a divisor of the input frame rate) at which
    /// block `i` runs.
    pub fn block_resolution(&self, i: usize) -> usize {
        self.time_down_factors[..i].iter().product()
    }

    /// Frequency extent after all down-sampling.
    pub fn final_bands(&self) -> usize {
        self.mel_bands / self.freq_down_factors.iter().product::<usize>()
    }

    /// Channel count of the first feature at time resolution `res`.
    pub fn channels_at_resolution(&self, res: usize) -> usize {
        for i in 0..self.blocks() {
            if self.block_resolution(i + 1) == res {
                return self.conv_channels[i];
            }
        }
        unreachable!("validated configs reach every resolution")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.classes == 0 || self.gru_hidden == 0 || self.mel_bands == 0 {
            return bad("classes, gru_hidden and mel_bands must be positive".into());
        }
        let n = self.conv_channels.len();
        if n == 0 || self.conv_channels.contains(&0) {
            return bad(format!(
                "conv_channels must be non-empty and positive, got {:?}",
                self.conv_channels
            ));
        }
        if self.time_down_factors.len() != n || self.freq_down_factors.len() != n {
            return bad("down-sampling factor lists must have one entry per conv block".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.time_down_factors.iter().any(|&f| f != 1 && f != 2)
            || self.time_down_factors.iter().product::<usize>() != 4
        {
            return bad(format!(
                "time_down_factors must be 1s and 2s with product 4, got {:?}",
                self.time_down_factors
            ));
        }
        let fprod: usize = self.freq_down_factors.iter().product();
        if self.freq_down_factors.contains(&0)
            || fprod > self.mel_bands
            || !self.mel_bands.is_multiple_of(fprod)
        {
            return bad(format!(
                "freq_down_factors {:?} must divide {} bands",
                self.freq_down_factors, self.mel_bands
            ));
        }
        if !(self.lp_pool_p >= 1.0) {
            return bad(format!(
                "lp_pool_p must be at least 1, got {}",
                self.lp_pool_p
            ));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad(format!(
                "leaky_slope must lie in [0, 1), got {}",
                self.leaky_slope
            ));
        }
        self.am.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::desk(3).validate().unwrap();
    }

    #[test]
    fn resolutions_follow_factors() {
        let c = ModelConfig::default();
        assert_eq!(
            (0..3).map(|i| c.block_resolution(i)).collect::<Vec<_>>(),
            vec![1, 2, 4]
        );
        assert_eq!(c.final_bands(), 1);
        assert_eq!(c.channels_at_resolution(2), 32);
        assert_eq!(c.channels_at_resolution(4), 64);
    }

    #[test]
    fn bad_schedules_rejected() {
        let bad = [
            ModelConfig {
                time_down_factors: vec![4, 1, 1],
                ..ModelConfig::default()
            },
            ModelConfig {
                time_down_factors: vec![2, 2, 2],
                ..ModelConfig::default()
            },
            ModelConfig {
                freq_down_factors: vec![4, 4, 8],
                ..ModelConfig::default()
            },
            ModelConfig {
                kernel: 4,
                ..ModelConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn json_round_trip() {
        let c = ModelConfig::desk(3);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
