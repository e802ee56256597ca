//! Layer lists, shape propagation and the receptive-field recursion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    ConvBnRelu,
    MaxPool,
    MeanFreqPool,
    LogSoftmax,
}

/// One row of the architecture table. Pairs are `(time, freq)`.
///
/// With `residual` set, the `repeat` layers are grouped into blocks of two,
/// each wrapped by an identity skip connection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub repeat: usize,
    pub residual: bool,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        LayerSpec {
            kind: LayerKind::ConvBnRelu,
            filters,
            kernel,
            stride,
            padding,
            repeat: 1,
            residual: false,
        }
    }

    pub fn max_pool(kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool,
            filters: 0,
            kernel,
            stride,
            padding,
            repeat: 1,
            residual: false,
        }
    }

    fn pointwise(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            filters: 0,
            kernel: (1, 1),
            stride: (1, 1),
            padding: (0, 0),
            repeat: 1,
            residual: false,
        }
    }

    pub fn mean_freq_pool() -> Self {
        Self::pointwise(LayerKind::MeanFreqPool)
    }

    pub fn log_softmax() -> Self {
        Self::pointwise(LayerKind::LogSoftmax)
    }

    pub fn repeated(mut self, n: usize) -> Self {
        self.repeat = n;
        self
    }

    pub fn residual(mut self) -> Self {
        self.residual = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub input_dim: usize,
    pub n_classes: usize,
    pub temporal_downsample: usize,
    pub input_period_ms: f64,
}

/// Shape of the activation between two layers: channels and frequency bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlaneShape {
    pub channels: usize,
    pub freq: usize,
}

impl std::fmt::Display for PlaneShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} channels x {} bins", self.channels, self.freq)
    }
}

fn out_len(n: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (n + 2 * p).checked_sub(k).map(|v| v / s + 1)
}

impl NetworkSpec {
    /// The 60-class CP-ResNet variant with time receptive field control ρ_t = 6.
    ///
    /// "3x1" kernels span 3 frequency bins and 1 frame, which keeps the
    /// temporal receptive field at 59 frames.
    pub fn table1() -> Self {
        NetworkSpec {
            layers: vec![
                LayerSpec::conv(64, (5, 5), (2, 2), (1, 1)),
                LayerSpec::conv(64, (3, 3), (1, 1), (1, 1)),
                LayerSpec::conv(64, (1, 1), (1, 1), (1, 1)),
                LayerSpec::max_pool((2, 2), (2, 2), (0, 0)),
                LayerSpec::conv(64, (3, 3), (1, 1), (1, 1)).repeated(6).residual(),
                LayerSpec::conv(128, (1, 3), (1, 1), (0, 1)).repeated(2),
                LayerSpec::conv(128, (1, 1), (1, 1), (0, 0)).repeated(2).residual(),
                LayerSpec::conv(60, (1, 1), (1, 1), (0, 0)),
                LayerSpec::mean_freq_pool(),
                LayerSpec::log_softmax(),
            ],
            input_dim: 80,
            n_classes: 60,
            temporal_downsample: 4,
            input_period_ms: 10.0,
        }
    }

    /// Parses `builtin:table1` or a path to a JSON network description.
    pub fn from_arg(arg: &str) -> Result<Self> {
        match arg {
            "builtin:table1" | "table1" => Ok(Self::table1()),
            other if other.starts_with("builtin:") => Err(Error::Config(format!("unknown built-in network {other:?}"))),
            path => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
                let spec: NetworkSpec = serde_json::from_str(&text)?;
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    pub fn output_period_ms(&self) -> f64 {
        self.input_period_ms * self.temporal_downsample as f64
    }

    /// Layers with `repeat` expanded.
    pub fn units(&self) -> impl Iterator<Item = &LayerSpec> + '_ {
        self.layers.iter().flat_map(|l| std::iter::repeat_n(l, l.repeat))
    }

    pub fn validate(&self) -> Result<()> {
        let mut shape = PlaneShape {
            channels: 1,
            freq: self.input_dim,
        };
        let mut time_stride = 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let name = format!("layer {i} ({:?})", layer.kind);
            if layer.kernel.0 == 0 || layer.kernel.1 == 0 || layer.stride.0 == 0 || layer.stride.1 == 0 {
                return Err(Error::Config(format!("{name}: kernel and stride must be >= 1")));
            }
            if layer.repeat == 0 {
                return Err(Error::Config(format!("{name}: repeat must be >= 1")));
            }
            if layer.residual {
                if layer.kind != LayerKind::ConvBnRelu || layer.repeat % 2 != 0 {
                    return Err(Error::Config(format!(
                        "{name}: residual groups must be conv layers repeated an even number of times"
                    )));
                }
                let same = |k: usize, s: usize, p: usize| s == 1 && k % 2 == 1 && 2 * p + 1 == k;
                if !same(layer.kernel.0, layer.stride.0, layer.padding.0)
                    || !same(layer.kernel.1, layer.stride.1, layer.padding.1)
                {
                    return Err(Error::shape(
                        &name,
                        "shape-preserving kernel/stride/padding for an identity skip",
                        format!(
                            "kernel {:?} stride {:?} padding {:?}",
                            layer.kernel, layer.stride, layer.padding
                        ),
                    ));
                }
                if layer.filters != shape.channels {
                    return Err(Error::shape(
                        &name,
                        format!("{} filters to match the skip input", shape.channels),
                        format!("{} filters", layer.filters),
                    ));
                }
            }
            for _ in 0..layer.repeat {
                shape = self.step_shape(layer, shape, &name)?;
                time_stride *= layer.stride.0;
            }
        }
        if time_stride != self.temporal_downsample {
            return Err(Error::Config(format!(
                "time strides multiply to {time_stride}, expected {}",
                self.temporal_downsample
            )));
        }
        if shape.channels != self.n_classes || shape.freq != 1 {
            return Err(Error::shape(
                "network output",
                format!("{} channels x 1 bin", self.n_classes),
                shape,
            ));
        }
        Ok(())
    }

    fn step_shape(&self, layer: &LayerSpec, shape: PlaneShape, name: &str) -> Result<PlaneShape> {
        match layer.kind {
            LayerKind::ConvBnRelu | LayerKind::MaxPool => {
                let freq = out_len(shape.freq, layer.kernel.1, layer.stride.1, layer.padding.1)
                    .filter(|&f| f > 0)
                    .ok_or_else(|| Error::shape(name, format!(">= {} frequency bins", layer.kernel.1), shape))?;
                let channels = if layer.kind == LayerKind::ConvBnRelu {
                    if layer.filters == 0 {
                        return Err(Error::Config(format!("{name}: conv with zero filters")));
                    }
                    layer.filters
                } else {
                    shape.channels
                };
                Ok(PlaneShape { channels, freq })
            }
            LayerKind::MeanFreqPool => Ok(PlaneShape {
                channels: shape.channels,
                freq: 1,
            }),
            LayerKind::LogSoftmax => Ok(shape),
        }
    }

    /// Activation shapes before each expanded unit, plus the final output.
    pub fn unit_shapes(&self) -> Result<Vec<PlaneShape>> {
        self.validate()?;
        let mut shape = PlaneShape {
            channels: 1,
            freq: self.input_dim,
        };
        let mut out = vec![shape];
        for layer in self.units() {
            shape = self.step_shape(layer, shape, "unit")?;
            out.push(shape);
        }
        Ok(out)
    }

    /// Number of output rows for `n_frames` input frames.
    pub fn output_len(&self, n_frames: usize) -> usize {
        self.units()
            .try_fold(n_frames, |n, l| out_len(n, l.kernel.0, l.stride.0, l.padding.0))
            .unwrap_or(0)
    }

    /// Largest input frame index that output row `row` depends on.
    pub fn last_input_needed(&self, row: usize) -> i64 {
        let units: Vec<&LayerSpec> = self.units().collect();
        units.iter().rev().fold(row as i64, |j, l| {
            j * l.stride.0 as i64 - l.padding.0 as i64 + l.kernel.0 as i64 - 1
        })
    }

    /// Smallest input frame index that output row `row` depends on.
    pub fn first_input_needed(&self, row: usize) -> i64 {
        let units: Vec<&LayerSpec> = self.units().collect();
        units
            .iter()
            .rev()
            .fold(row as i64, |j, l| j * l.stride.0 as i64 - l.padding.0 as i64)
    }
}

/// Temporal receptive field and total time stride.
///
/// `rf ← rf + (k_t − 1)·jump; jump ← jump·s_t`, starting from `rf = jump = 1`.
pub fn receptive_field(spec: &NetworkSpec) -> (usize, usize) {
    receptive_field_of(spec.units())
}

pub fn receptive_field_of<'a>(units: impl IntoIterator<Item = &'a LayerSpec>) -> (usize, usize) {
    units.into_iter().fold((1, 1), |(rf, jump), l| {
        (rf + (l.kernel.0 - 1) * jump, jump * l.stride.0)
    })
}
