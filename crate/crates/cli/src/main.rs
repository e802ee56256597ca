use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use lyrictrack::eval::{load_annotations, metrics, transfer, write_annotations, Annotation};
use lyrictrack::features::{extract, read_wav, resample, FeatureConfig, FeatureMatrix, Variant};
use lyrictrack::net::{receptive_field, Network, NetworkSpec, WeightStore, DEFAULT_LATENCY_FRAMES};
use lyrictrack::posteriogram::{PhonemeVocab, Posteriogram};
use lyrictrack::replay::{prepare_reference, replay_features, replay_posteriogram};
use lyrictrack::synth::{synth_warp, synthetic_reference, WarpSpec};
use lyrictrack::tracker::{
    read_events, write_events, EventFormat, Normalization, TrackerConfig, DEFAULT_WINDOW_FRAMES,
};
use lyrictrack::Error;

#[derive(Parser)]
#[command(name = "lyrictrack", version, about = "Real-time lyrics tracking engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a feature matrix from a mono WAV file.
    Features {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Model80)]
        variant: VariantArg,
    },
    /// Run the acoustic model over a feature matrix.
    Infer {
        #[arg(long)]
        feat: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "builtin:table1")]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a target against a reference posteriogram, frame by frame.
    Track {
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Target posteriogram.
        #[arg(long, required_unless_present = "target_feat", conflicts_with = "target_feat")]
        target: Option<PathBuf>,
        /// Target features, streamed through the acoustic model.
        #[arg(long, requires = "weights")]
        target_feat: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value = "builtin:table1")]
        spec: String,
        #[arg(long, default_value_t = DEFAULT_WINDOW_FRAMES)]
        window: usize,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        monotonic: Switch,
        #[arg(long, value_enum, default_value_t = NormArg::PathLength)]
        normalization: NormArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
        format: FormatArg,
        /// Run inference and tracking on separate threads.
        #[arg(long)]
        pipelined: bool,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transfer reference annotations through an event stream and score them.
    Eval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        ref_annot: PathBuf,
        #[arg(long)]
        target_annot: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Warp a reference posteriogram into a synthetic target with known truth.
    Synth {
        #[arg(long = "ref")]
        reference: PathBuf,
        /// JSON object with `breakpoints` as `[reference_ms, target_ms]` pairs.
        #[arg(long)]
        warp: PathBuf,
        /// Overrides the warp file's noise level.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Reference annotations to map onto the target.
        #[arg(long, requires = "target_annot")]
        ref_annot: Option<PathBuf>,
        /// Where the mapped annotations go.
        #[arg(long, requires = "ref_annot")]
        target_annot: Option<PathBuf>,
    },
    /// Write a random phoneme-like reference posteriogram.
    SynthRef {
        #[arg(long, default_value_t = 3000)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write randomly initialized network weights.
    InitWeights {
        #[arg(long, default_value = "builtin:table1")]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the temporal receptive field, stride and latency of a network.
    Rf {
        #[arg(long, default_value = "builtin:table1")]
        spec: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Model80,
    Baseline,
    Recitative,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Model80 => Variant::Model80,
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::Recitative => Variant::Recitative,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    PathLength,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Jsonl,
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::file(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path).map(BufReader::new).map_err(|e| Error::file(path, e))
}

/// Runs `f` against the file at `path`, or stdout when absent.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), Error> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush().map_err(|e| Error::file(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush().map_err(Error::from)
        }
    }
}

fn features(input: &Path, out: &Path, variant: Variant) -> Result<(), Error> {
    let config = FeatureConfig::for_variant(variant);
    let mut audio = read_wav(input)?;
    if audio.sample_rate_hz() != config.sample_rate_hz {
        eprintln!(
            "resampling {} Hz -> {} Hz",
            audio.sample_rate_hz(),
            config.sample_rate_hz
        );
        audio = resample(&audio, config.sample_rate_hz)?;
    }
    let feat = extract(&audio, &config)?;
    eprintln!("{} frames x {} coefficients", feat.n_frames(), feat.dim());
    feat.save(out)
}

fn load_network(spec: &str, weights: &Path) -> Result<Arc<Network>, Error> {
    let spec = NetworkSpec::from_arg(spec)?;
    let weights = WeightStore::load(weights)?;
    Ok(Arc::new(Network::new(spec, &weights)?))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Features { input, out, variant } => features(&input, &out, variant.into()),
        Command::Infer {
            feat,
            weights,
            spec,
            out,
        } => {
            let features = FeatureMatrix::load(&feat)?;
            let net = load_network(&spec, &weights)?;
            let pg = net.infer(&features, PhonemeVocab::default())?;
            eprintln!("{} posteriogram frames", pg.n_frames());
            pg.save(&out)
        }
        Command::Track {
            reference,
            target,
            target_feat,
            weights,
            spec,
            window,
            monotonic,
            normalization,
            format,
            pipelined,
            out,
        } => {
            let reference = Posteriogram::load(&reference)?;
            let config = TrackerConfig {
                window_frames: window,
                monotonic: monotonic == Switch::On,
                normalization: match normalization {
                    NormArg::PathLength => Normalization::PathLength,
                    NormArg::Raw => Normalization::Raw,
                },
                target_frame_period_ms: None,
            };
            config.validate()?;
            eprintln!(
                "window {} frames = {} s of reference context",
                config.window_frames,
                config.context_seconds(reference.frame_period_ms())
            );
            let prepared = prepare_reference(&reference)?;
            let events = match (target, target_feat) {
                (Some(t), _) => replay_posteriogram(prepared, &Posteriogram::load(&t)?, config)?,
                (None, Some(f)) => {
                    let weights = weights.expect("clap enforces --weights");
                    let net = load_network(&spec, &weights)?;
                    let features = FeatureMatrix::load(&f)?;
                    replay_features(net, DEFAULT_LATENCY_FRAMES, &features, prepared, config, pipelined)?
                }
                (None, None) => unreachable!("clap requires a target"),
            };
            let format = match format {
                FormatArg::Tsv => EventFormat::Tsv,
                FormatArg::Jsonl => EventFormat::JsonLines,
            };
            with_output(out.as_deref(), |w| write_events(w, &events, format))
        }
        Command::Eval {
            events,
            ref_annot,
            target_annot,
            out,
        } => {
            let events = read_events(open(&events)?)?;
            let reference = load_annotations(&ref_annot)?;
            let truth = load_annotations(&target_annot)?;
            let detected = transfer(&reference, &events)?;
            let times: Vec<f64> = detected.iter().map(|d| d.time_ms).collect();
            let truth: Vec<f64> = truth.iter().map(|a| a.time_ms).collect();
            let report = metrics(&times, &truth)?;
            eprintln!(
                "mean error {:.1} ms, {:.1}% within 1 s over {} anchors",
                report.mean_error_ms, report.pct_within_1s, report.count
            );
            with_output(out.as_deref(), |w| {
                writeln!(w, "{}", report.to_json()?)?;
                Ok(())
            })
        }
        Command::Synth {
            reference,
            warp,
            noise,
            seed,
            out,
            truth,
            ref_annot,
            target_annot,
        } => {
            let reference = Posteriogram::load(&reference)?;
            let mut spec: WarpSpec = serde_json::from_reader(open(&warp)?)?;
            if let Some(n) = noise {
                spec.noise_level = n;
            }
            let (target, gt) = synth_warp(&reference, &spec, seed)?;
            target.save(&out)?;
            with_output(Some(&truth), |w| {
                serde_json::to_writer_pretty(&mut *w, &gt)?;
                writeln!(w)?;
                Ok(())
            })?;
            if let (Some(src), Some(dst)) = (ref_annot, target_annot) {
                let mapped: Vec<Annotation> = load_annotations(&src)?
                    .into_iter()
                    .map(|a| Annotation {
                        time_ms: spec.forward(a.time_ms),
                        label: a.label,
                    })
                    .collect();
                with_output(Some(&dst), |w| write_annotations(w, &mapped))?;
            }
            eprintln!(
                "{} reference frames -> {} target frames",
                gt.reference_frames, gt.target_frames
            );
            Ok(())
        }
        Command::SynthRef { frames, seed, out } => synthetic_reference(frames, seed)?.save(&out),
        Command::InitWeights { spec, seed, out } => {
            let spec = NetworkSpec::from_arg(&spec)?;
            WeightStore::random(&spec, seed)?.save(&out)
        }
        Command::Rf { spec } => {
            let spec = NetworkSpec::from_arg(&spec)?;
            let (rf, stride) = receptive_field(&spec);
            println!("rf_frames={rf}");
            println!("stride={stride}");
            println!("latency_frames={DEFAULT_LATENCY_FRAMES}");
            println!("output_period_ms={}", spec.output_period_ms());
            // The published figure of 57 frames is two short of the recursion.
            println!("note=published receptive field is 57 frames; the kernel/stride recursion gives {rf}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::File { .. }
                | Error::BadMagic { .. }
                | Error::Truncated(_)
                | Error::TruncatedTensor(_)
                | Error::Parse { .. }
                | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
