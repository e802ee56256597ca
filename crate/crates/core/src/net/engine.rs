//! Frame-synchronous convolution engine.
//!
//! Every layer keeps a short queue of input frames and emits an output frame
//! as soon as the frames its kernel covers have arrived. Batch inference
//! feeds the whole sequence through the same machinery and then flushes, so
//! streamed rows are bit-identical to batch rows.

use std::collections::VecDeque;
use std::sync::Arc;

use super::spec::{LayerKind, LayerSpec, NetworkSpec};
use super::weights::{WeightStore, BN_PARTS, DEFAULT_BN_EPS};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::matrix::Matrix;
use crate::posteriogram::{PhonemeVocab, Posteriogram};

/// Default future context, in input frames, between a row's anchor position
/// and the newest frame it may depend on.
pub const DEFAULT_LATENCY_FRAMES: usize = 28;

/// One time step of an activation, `channels x freq`, channel-major.
type Frame = Vec<f32>;

#[derive(Debug)]
struct Conv {
    cin: usize,
    cout: usize,
    kt: usize,
    kf: usize,
    sf: usize,
    pf: usize,
    fin: usize,
    fout: usize,
    /// `cout x (cin·kt·kf)`, row-major.
    weight: Vec<f32>,
    /// Bias and batch norm folded into a per-channel affine map.
    scale: Vec<f32>,
    shift: Vec<f32>,
}

impl Conv {
    fn forward(&self, inputs: &[Option<&Frame>]) -> Frame {
        let k = self.cin * self.kt * self.kf;
        let mut patches = vec![0.0f32; k * self.fout];
        for (dt, frame) in inputs.iter().enumerate() {
            let Some(frame) = frame else { continue };
            for c in 0..self.cin {
                let plane = &frame[c * self.fin..(c + 1) * self.fin];
                for df in 0..self.kf {
                    let row = ((c * self.kt + dt) * self.kf + df) * self.fout;
                    for fo in 0..self.fout {
                        let fi = (fo * self.sf + df) as isize - self.pf as isize;
                        if fi >= 0 && (fi as usize) < self.fin {
                            patches[row + fo] = plane[fi as usize];
                        }
                    }
                }
            }
        }
        let mut out = vec![0.0f32; self.cout * self.fout];
        // SAFETY: the slices hold exactly m·k, k·n and m·n elements with the
        // row-major strides passed alongside.
        unsafe {
            matrixmultiply::sgemm(
                self.cout,
                k,
                self.fout,
                1.0,
                self.weight.as_ptr(),
                k as isize,
                1,
                patches.as_ptr(),
                self.fout as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                self.fout as isize,
                1,
            );
        }
        for o in 0..self.cout {
            let (s, b) = (self.scale[o], self.shift[o]);
            for v in &mut out[o * self.fout..(o + 1) * self.fout] {
                *v = (*v * s + b).max(0.0);
            }
        }
        out
    }
}

#[derive(Debug)]
struct Pool {
    channels: usize,
    kf: usize,
    sf: usize,
    pf: usize,
    fin: usize,
    fout: usize,
}

impl Pool {
    /// Padded positions are ignored, as if they held −∞.
    fn forward(&self, inputs: &[Option<&Frame>]) -> Frame {
        let mut out = vec![f32::NEG_INFINITY; self.channels * self.fout];
        for frame in inputs.iter().flatten() {
            for c in 0..self.channels {
                for fo in 0..self.fout {
                    let o = &mut out[c * self.fout + fo];
                    for df in 0..self.kf {
                        let fi = (fo * self.sf + df) as isize - self.pf as isize;
                        if fi >= 0 && (fi as usize) < self.fin {
                            *o = o.max(frame[c * self.fin + fi as usize]);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op {
    Conv(Conv),
    Pool(Pool),
}

#[derive(Debug)]
enum Node {
    /// Time-windowed op with temporal kernel, stride and padding.
    Windowed {
        op: Op,
        kt: usize,
        st: usize,
        pt: usize,
    },
    Residual(Vec<Node>),
    MeanFreq {
        channels: usize,
        freq: usize,
    },
    LogSoftmax,
}

/// A network with its weights bound and validated.
#[derive(Debug)]
pub struct Network {
    spec: NetworkSpec,
    nodes: Vec<Node>,
}

fn conv_node(
    layer: &LayerSpec,
    index: usize,
    cin: usize,
    fin: usize,
    fout: usize,
    weights: &WeightStore,
) -> Result<Node> {
    let p = format!("conv{index}");
    let w = weights.require(
        &format!("{p}.weight"),
        &[layer.filters, cin, layer.kernel.0, layer.kernel.1],
    )?;
    let bias = weights.require(&format!("{p}.bias"), &[layer.filters])?;
    let bn: Vec<&[f32]> = BN_PARTS
        .iter()
        .map(|part| {
            weights
                .require(&format!("{p}.{part}"), &[layer.filters])
                .map(|t| t.data.as_slice())
        })
        .collect::<Result<_>>()?;
    let eps = weights
        .get(&format!("{p}.bn.eps"))
        .map(|t| t.data[0])
        .unwrap_or(DEFAULT_BN_EPS);
    let (gamma, beta, mean, var) = (bn[0], bn[1], bn[2], bn[3]);
    let scale: Vec<f32> = (0..layer.filters).map(|o| gamma[o] / (var[o] + eps).sqrt()).collect();
    let shift = (0..layer.filters)
        .map(|o| beta[o] + (bias.data[o] - mean[o]) * scale[o])
        .collect();
    Ok(Node::Windowed {
        op: Op::Conv(Conv {
            cin,
            cout: layer.filters,
            kt: layer.kernel.0,
            kf: layer.kernel.1,
            sf: layer.stride.1,
            pf: layer.padding.1,
            fin,
            fout,
            weight: w.data.clone(),
            scale,
            shift,
        }),
        kt: layer.kernel.0,
        st: layer.stride.0,
        pt: layer.padding.0,
    })
}

impl Network {
    pub fn new(spec: NetworkSpec, weights: &WeightStore) -> Result<Self> {
        weights.validate(&spec)?;
        let shapes = spec.unit_shapes()?;
        let mut nodes = Vec::new();
        let mut unit = 0;
        let mut conv = 0;
        for layer in &spec.layers {
            let mut group = Vec::new();
            for _ in 0..layer.repeat {
                let (input, output) = (shapes[unit], shapes[unit + 1]);
                let node = match layer.kind {
                    LayerKind::ConvBnRelu => {
                        conv += 1;
                        conv_node(layer, conv - 1, input.channels, input.freq, output.freq, weights)?
                    }
                    LayerKind::MaxPool => Node::Windowed {
                        op: Op::Pool(Pool {
                            channels: input.channels,
                            kf: layer.kernel.1,
                            sf: layer.stride.1,
                            pf: layer.padding.1,
                            fin: input.freq,
                            fout: output.freq,
                        }),
                        kt: layer.kernel.0,
                        st: layer.stride.0,
                        pt: layer.padding.0,
                    },
                    LayerKind::MeanFreqPool => Node::MeanFreq {
                        channels: input.channels,
                        freq: input.freq,
                    },
                    LayerKind::LogSoftmax => Node::LogSoftmax,
                };
                group.push(node);
                unit += 1;
            }
            if layer.residual {
                let mut it = group.into_iter();
                while let (Some(a), Some(b)) = (it.next(), it.next()) {
                    nodes.push(Node::Residual(vec![a, b]));
                }
            } else {
                nodes.extend(group);
            }
        }
        Ok(Network { spec, nodes })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Runs the whole sequence, including the zero-padded tail.
    pub fn infer_rows(self: &Arc<Self>, features: &FeatureMatrix) -> Result<Vec<StreamRow>> {
        let mut stream = StreamingInference::new(Arc::clone(self), DEFAULT_LATENCY_FRAMES);
        let mut rows = Vec::new();
        for frame in features.data.iter_rows() {
            if let Some(row) = stream.push(frame)? {
                rows.push(row);
            }
        }
        rows.extend(stream.finish());
        Ok(rows)
    }

    pub fn infer(self: &Arc<Self>, features: &FeatureMatrix, vocab: PhonemeVocab) -> Result<Posteriogram> {
        let rows = self.infer_rows(features)?;
        let data = Matrix::from_rows(self.spec.n_classes, rows.iter().map(|r| &r.log_probs))?;
        Posteriogram::new(data, self.spec.output_period_ms(), vocab)
    }
}

/// Batch inference: features in, log-probability posteriogram out.
pub fn infer(features: &FeatureMatrix, weights: &WeightStore, spec: &NetworkSpec) -> Result<Posteriogram> {
    let net = Arc::new(Network::new(spec.clone(), weights)?);
    net.infer(features, PhonemeVocab::default())
}

struct TimeWindow {
    k: usize,
    s: usize,
    p: usize,
    buf: VecDeque<Frame>,
    buf_start: usize,
    n_in: usize,
    next_out: usize,
    total: Option<usize>,
}

impl TimeWindow {
    fn new(k: usize, s: usize, p: usize) -> Self {
        TimeWindow {
            k,
            s,
            p,
            buf: VecDeque::new(),
            buf_start: 0,
            n_in: 0,
            next_out: 0,
            total: None,
        }
    }

    fn first(&self, j: usize) -> isize {
        (j * self.s) as isize - self.p as isize
    }

    fn ready(&self) -> bool {
        match self.total {
            Some(t) => match (t + 2 * self.p).checked_sub(self.k) {
                Some(span) => self.next_out <= span / self.s,
                None => false,
            },
            None => self.first(self.next_out) + (self.k as isize) - 1 < self.n_in as isize,
        }
    }

    fn inputs(&self) -> Vec<Option<&Frame>> {
        let lo = self.first(self.next_out);
        (lo..lo + self.k as isize)
            .map(|i| (i >= 0 && (i as usize) < self.n_in).then(|| &self.buf[i as usize - self.buf_start]))
            .collect()
    }

    fn advance(&mut self) {
        self.next_out += 1;
        let lo = self.first(self.next_out);
        while !self.buf.is_empty() && (self.buf_start as isize) < lo {
            self.buf.pop_front();
            self.buf_start += 1;
        }
    }
}

enum State {
    Window(TimeWindow),
    Residual { inner: Vec<State>, skip: VecDeque<Frame> },
    Stateless,
}

fn init_state(node: &Node) -> State {
    match node {
        Node::Windowed { kt, st, pt, .. } => State::Window(TimeWindow::new(*kt, *st, *pt)),
        Node::Residual(inner) => State::Residual {
            inner: inner.iter().map(init_state).collect(),
            skip: VecDeque::new(),
        },
        _ => State::Stateless,
    }
}

fn drain_window(op: &Op, win: &mut TimeWindow, out: &mut Vec<Frame>) {
    while win.ready() {
        let inputs = win.inputs();
        out.push(match op {
            Op::Conv(c) => c.forward(&inputs),
            Op::Pool(p) => p.forward(&inputs),
        });
        win.advance();
    }
}

/// Normalized in f64; large logits would otherwise lose the low bits.
fn log_softmax(mut x: Frame) -> Frame {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let log_sum = x.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
    x.iter_mut().for_each(|v| *v = (*v as f64 - max - log_sum) as f32);
    x
}

fn push(node: &Node, state: &mut State, frame: Frame, out: &mut Vec<Frame>) {
    match (node, state) {
        (Node::Windowed { op, .. }, State::Window(win)) => {
            win.buf.push_back(frame);
            win.n_in += 1;
            drain_window(op, win, out);
        }
        (Node::Residual(nodes), State::Residual { inner, skip }) => {
            skip.push_back(frame.clone());
            let ys = chain_push(nodes, inner, vec![frame]);
            add_skip(skip, ys, out);
        }
        (Node::MeanFreq { channels, freq }, _) => {
            out.push(
                (0..*channels)
                    .map(|c| {
                        let s: f32 = frame[c * freq..(c + 1) * freq].iter().sum();
                        s / *freq as f32
                    })
                    .collect(),
            );
        }
        (Node::LogSoftmax, _) => out.push(log_softmax(frame)),
        _ => unreachable!("state built from the same node list"),
    }
}

fn finish(node: &Node, state: &mut State, out: &mut Vec<Frame>) {
    match (node, state) {
        (Node::Windowed { op, .. }, State::Window(win)) => {
            win.total = Some(win.n_in);
            drain_window(op, win, out);
        }
        (Node::Residual(nodes), State::Residual { inner, skip }) => {
            let ys = chain_finish(nodes, inner, Vec::new());
            add_skip(skip, ys, out);
        }
        _ => {}
    }
}

fn add_skip(skip: &mut VecDeque<Frame>, ys: Vec<Frame>, out: &mut Vec<Frame>) {
    for mut y in ys {
        let x = skip.pop_front().expect("residual branch preserves length");
        y.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
        out.push(y);
    }
}

fn chain_push(nodes: &[Node], states: &mut [State], mut frames: Vec<Frame>) -> Vec<Frame> {
    for (node, state) in nodes.iter().zip(states.iter_mut()) {
        let mut next = Vec::new();
        for f in frames {
            push(node, state, f, &mut next);
        }
        frames = next;
    }
    frames
}

fn chain_finish(nodes: &[Node], states: &mut [State], mut carry: Vec<Frame>) -> Vec<Frame> {
    for (node, state) in nodes.iter().zip(states.iter_mut()) {
        let mut next = Vec::new();
        for f in carry {
            push(node, state, f, &mut next);
        }
        finish(node, state, &mut next);
        carry = next;
    }
    carry
}

/// One posteriogram row produced by the streaming engine.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRow {
    pub index: usize,
    /// Input frame this row is attributed to: the newest frame it depends on
    /// minus the configured latency.
    pub input_position: usize,
    /// Computed during the end-of-stream flush with zero future context.
    pub padded: bool,
    pub log_probs: Vec<f32>,
}

/// Incremental inference over one feature stream.
pub struct StreamingInference {
    net: Arc<Network>,
    states: Vec<State>,
    latency_frames: usize,
    consumed: usize,
    emitted: usize,
    pending: VecDeque<StreamRow>,
}

impl StreamingInference {
    pub fn new(net: Arc<Network>, latency_frames: usize) -> Self {
        let states = net.nodes.iter().map(init_state).collect();
        StreamingInference {
            net,
            states,
            latency_frames,
            consumed: 0,
            emitted: 0,
            pending: VecDeque::new(),
        }
    }

    pub fn latency_frames(&self) -> usize {
        self.latency_frames
    }

    pub fn frames_consumed(&self) -> usize {
        self.consumed
    }

    /// Input frame index a row is attributed to.
    pub fn input_position(&self, row: usize) -> usize {
        let last = self.net.spec.last_input_needed(row);
        (last - self.latency_frames as i64).max(0) as usize
    }

    fn wrap(&mut self, frames: Vec<Frame>, padded: bool) {
        for f in frames {
            let index = self.emitted;
            self.emitted += 1;
            self.pending.push_back(StreamRow {
                index,
                input_position: self.input_position(index),
                padded,
                log_probs: f,
            });
        }
    }

    /// Feeds the next feature frame. Returns a row once all the input it
    /// depends on has arrived.
    pub fn push(&mut self, frame: &[f32]) -> Result<Option<StreamRow>> {
        let dim = self.net.spec.input_dim;
        if frame.len() != dim {
            return Err(Error::shape(
                "input frame",
                format!("{dim} features"),
                format!("{} features", frame.len()),
            ));
        }
        self.consumed += 1;
        let out = chain_push(&self.net.nodes, &mut self.states, vec![frame.to_vec()]);
        self.wrap(out, false);
        Ok(self.pending.pop_front())
    }

    /// Rows produced but not yet returned by [`push`](Self::push).
    pub fn take_pending(&mut self) -> Vec<StreamRow> {
        self.pending.drain(..).collect()
    }

    /// Ends the stream: emits every remaining row with zero future context.
    pub fn finish(mut self) -> Vec<StreamRow> {
        let nodes = Arc::clone(&self.net);
        let out = chain_finish(&nodes.nodes, &mut self.states, Vec::new());
        self.wrap(out, true);
        self.pending.into_iter().collect()
    }
}
