//! `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are errors. Command-line flags override file keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use abelnet::adversarial::{LossKind, TrainConfig};
use abelnet::beliefnet::{Architecture, LayerSpec, MapShape};
use abelnet::datasets::{DIGITS_THRESHOLD, IDX_THRESHOLD};
use abelnet::optim::OptimizerKind;
use anyhow::{anyhow, bail, Context, Result};

/// Where the training samples come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Digits {
        path: PathBuf,
    },
    Idx {
        images: PathBuf,
        labels: Option<PathBuf>,
    },
    SpikesCsv {
        path: PathBuf,
    },
    SynthSpikes {
        neurons: usize,
        frames: usize,
        rate: f64,
        shared: f64,
    },
    Bernoulli {
        probs: Vec<f64>,
        samples: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Generator layers, input first.
    pub dbn_layers: Vec<LayerToken>,
    /// Critic widths; the first entry is the sample width, the last is 1.
    pub disc_layers: Vec<usize>,
    pub dataset: DatasetSpec,
    pub threshold: Option<f64>,
    /// 0 for unconditional training.
    pub conditional_classes: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
    pub loglik_every: usize,
    pub loglik_samples: usize,
    pub loglik_points: usize,
    pub sample_count: usize,
    pub grid_cols: usize,
    pub image_shape: Option<(usize, usize)>,
    pub bench_layers: usize,
    pub bench_width: usize,
    pub bench_batch: usize,
    pub bench_workers: Vec<usize>,
    pub bench_repeats: usize,
}

/// One entry of `dbn_layers`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerToken {
    Dense(usize),
    Map(MapShape),
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
}

impl LayerToken {
    fn parse(token: &str) -> Result<Self> {
        let t = token.trim();
        if let Some(rest) = t.strip_prefix("conv:") {
            let parts: Vec<usize> = rest
                .split(':')
                .map(|p| p.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow!("bad conv layer {t:?}, expected conv:FILTERS:KERNEL[:STRIDE]"))?;
            return match parts[..] {
                [filters, kernel] => Ok(LayerToken::Conv {
                    filters,
                    kernel,
                    stride: 1,
                }),
                [filters, kernel, stride] => Ok(LayerToken::Conv {
                    filters,
                    kernel,
                    stride,
                }),
                _ => bail!("bad conv layer {t:?}, expected conv:FILTERS:KERNEL[:STRIDE]"),
            };
        }
        let dims: Vec<usize> = t
            .split('x')
            .map(|p| p.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| anyhow!("bad layer {t:?}, expected N, HxW, CxHxW or conv:F:K:S"))?;
        if dims.contains(&0) {
            bail!("layer {t:?} has a zero dimension");
        }
        match dims[..] {
            [n] => Ok(LayerToken::Dense(n)),
            [h, w] => Ok(LayerToken::Map(MapShape::new(1, h, w))),
            [c, h, w] => Ok(LayerToken::Map(MapShape::new(c, h, w))),
            _ => bail!("bad layer {t:?}"),
        }
    }

    fn render(&self) -> String {
        match self {
            LayerToken::Dense(n) => n.to_string(),
            LayerToken::Map(s) if s.channels == 1 => format!("{}x{}", s.height, s.width),
            LayerToken::Map(s) => format!("{}x{}x{}", s.channels, s.height, s.width),
            LayerToken::Conv {
                filters,
                kernel,
                stride,
            } => format!("conv:{filters}:{kernel}:{stride}"),
        }
    }

    fn units(&self) -> Option<usize> {
        match self {
            LayerToken::Dense(n) => Some(*n),
            LayerToken::Map(s) => Some(s.len()),
            LayerToken::Conv { .. } => None,
        }
    }
}

pub fn architecture(tokens: &[LayerToken]) -> Result<Architecture> {
    let (first, rest) = tokens.split_first().ok_or_else(|| anyhow!("dbn_layers is empty"))?;
    let (input, input_shape) = match first {
        LayerToken::Dense(n) => (*n, None),
        LayerToken::Map(s) => (s.len(), Some(*s)),
        LayerToken::Conv { .. } => bail!("the input layer cannot be convolutional"),
    };
    let layers = rest
        .iter()
        .map(|t| match *t {
            LayerToken::Dense(units) => LayerSpec::Dense { units, shape: None },
            LayerToken::Map(s) => LayerSpec::Dense {
                units: s.len(),
                shape: Some(s),
            },
            LayerToken::Conv {
                filters,
                kernel,
                stride,
            } => LayerSpec::Conv {
                filters,
                kernel,
                stride,
            },
        })
        .collect();
    Ok(Architecture {
        input,
        input_shape,
        layers,
    })
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::new(LossKind::Js),
            dbn_layers: vec![LayerToken::Dense(64), LayerToken::Dense(64), LayerToken::Dense(64)],
            disc_layers: vec![64, 64, 1],
            dataset: DatasetSpec::Digits {
                path: PathBuf::from("data/digits.csv"),
            },
            threshold: None,
            conditional_classes: 0,
            out_dir: PathBuf::from("out"),
            workers: 1,
            checkpoint: None,
            checkpoint_every: 0,
            loglik_every: 0,
            loglik_samples: 1000,
            loglik_points: 200,
            sample_count: 100,
            grid_cols: 10,
            image_shape: None,
            bench_layers: 8,
            bench_width: 256,
            bench_batch: 32,
            bench_workers: vec![1, 2, 4],
            bench_repeats: 3,
        }
    }
}

/// Command-line overrides; `None` leaves the file value in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub loss: Option<String>,
    pub optimizer: Option<String>,
    pub iters: Option<usize>,
    pub batch: Option<usize>,
    pub clip: Option<f64>,
    pub checkpoint: Option<PathBuf>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| anyhow!("config key {key}: cannot parse {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("config key {key}: expected true or false, got {other:?}"),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_optimizer(key: &str, value: &str) -> Result<OptimizerKind> {
    value
        .trim()
        .parse()
        .map_err(|_| anyhow!("config key {key}: unknown optimizer {value:?} (sgd, rmsprop, adam)"))
}

fn parse_loss(value: &str) -> Result<LossKind> {
    value
        .trim()
        .parse()
        .map_err(|_| anyhow!("unknown loss {value:?} (js, wasserstein, mal)"))
}

/// Splits config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value, got {line:?}", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_text(&text, overrides)
    }

    pub fn from_text(text: &str, overrides: &Overrides) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let pairs = parse_pairs(text)?;
        let keys: BTreeMap<&str, &str> = pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        // The loss fixes critic-step and head defaults, so it goes first.
        if let Some(v) = keys.get("loss") {
            cfg.train = TrainConfig::new(parse_loss(v)?);
        }
        if let Some(loss) = &overrides.loss {
            cfg.train = TrainConfig::new(parse_loss(loss)?);
        }
        let mut data_path: Option<PathBuf> = None;
        let mut label_path: Option<PathBuf> = None;
        let mut synth = (50usize, 100_000usize, 0.01f64, 0.0f64);
        let mut bernoulli = (Vec::<f64>::new(), 2000usize);
        let mut dataset_kind = String::from("digits");
        let mut lr_set = (false, false);
        for (key, value) in &pairs {
            let v = value.as_str();
            let t = &mut cfg.train;
            match key.as_str() {
                "loss" => {}
                "seed" => t.seed = parse_num(key, v)?,
                "iterations" => t.iterations = parse_num(key, v)?,
                "batch_size" => t.batch_size = parse_num(key, v)?,
                "critic_steps" => t.critic_steps = parse_num(key, v)?,
                "optimizer" => {
                    t.gen_optimizer = parse_optimizer(key, v)?;
                    t.disc_optimizer = t.gen_optimizer;
                }
                "gen_optimizer" => t.gen_optimizer = parse_optimizer(key, v)?,
                "disc_optimizer" => t.disc_optimizer = parse_optimizer(key, v)?,
                "gen_lr" => {
                    t.gen_lr = parse_num(key, v)?;
                    lr_set.0 = true;
                }
                "disc_lr" => {
                    t.disc_lr = parse_num(key, v)?;
                    lr_set.1 = true;
                }
                "clip" => t.clip = parse_num(key, v)?,
                "eval_every" => t.eval_every = parse_num(key, v)?,
                "baseline" => t.baseline = parse_bool(key, v)?,
                "layer_parallel" => t.layer_parallel = parse_bool(key, v)?,
                "dbn_layers" => {
                    cfg.dbn_layers = v
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(LayerToken::parse)
                        .collect::<Result<_>>()?
                }
                "disc_layers" => cfg.disc_layers = parse_list(key, v)?,
                "dataset" => dataset_kind = v.to_string(),
                "data_path" => data_path = Some(PathBuf::from(v)),
                "label_path" => label_path = Some(PathBuf::from(v)),
                "synth_neurons" => synth.0 = parse_num(key, v)?,
                "synth_frames" => synth.1 = parse_num(key, v)?,
                "synth_rate" => synth.2 = parse_num(key, v)?,
                "synth_shared" => synth.3 = parse_num(key, v)?,
                "bernoulli_probs" => bernoulli.0 = parse_list(key, v)?,
                "bernoulli_samples" => bernoulli.1 = parse_num(key, v)?,
                "threshold" => cfg.threshold = Some(parse_num(key, v)?),
                "conditional_classes" => cfg.conditional_classes = parse_num(key, v)?,
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "workers" => cfg.workers = parse_num(key, v)?,
                "checkpoint" => cfg.checkpoint = Some(PathBuf::from(v)),
                "checkpoint_every" => cfg.checkpoint_every = parse_num(key, v)?,
                "loglik_every" => cfg.loglik_every = parse_num(key, v)?,
                "loglik_samples" => cfg.loglik_samples = parse_num(key, v)?,
                "loglik_points" => cfg.loglik_points = parse_num(key, v)?,
                "sample_count" => cfg.sample_count = parse_num(key, v)?,
                "grid_cols" => cfg.grid_cols = parse_num(key, v)?,
                "image_shape" => {
                    let dims: Vec<usize> = v.split('x').map(|d| parse_num(key, d)).collect::<Result<_>>()?;
                    match dims[..] {
                        [h, w] => cfg.image_shape = Some((h, w)),
                        _ => bail!("config key image_shape: expected HxW, got {v:?}"),
                    }
                }
                "bench_layers" => cfg.bench_layers = parse_num(key, v)?,
                "bench_width" => cfg.bench_width = parse_num(key, v)?,
                "bench_batch" => cfg.bench_batch = parse_num(key, v)?,
                "bench_workers" => cfg.bench_workers = parse_list(key, v)?,
                "bench_repeats" => cfg.bench_repeats = parse_num(key, v)?,
                other => bail!("unknown config key {other:?}"),
            }
        }
        let need_path = |what: &str| {
            data_path
                .clone()
                .ok_or_else(|| anyhow!("dataset {what} needs data_path"))
        };
        cfg.dataset = match dataset_kind.as_str() {
            "digits" => DatasetSpec::Digits {
                path: data_path.clone().unwrap_or_else(|| PathBuf::from("data/digits.csv")),
            },
            "idx" => DatasetSpec::Idx {
                images: need_path("idx")?,
                labels: label_path,
            },
            "spikes_csv" => DatasetSpec::SpikesCsv {
                path: need_path("spikes_csv")?,
            },
            "synth_spikes" => DatasetSpec::SynthSpikes {
                neurons: synth.0,
                frames: synth.1,
                rate: synth.2,
                shared: synth.3,
            },
            "bernoulli" => DatasetSpec::Bernoulli {
                probs: bernoulli.0,
                samples: bernoulli.1,
            },
            other => bail!("unknown dataset {other:?} (digits, idx, spikes_csv, synth_spikes, bernoulli)"),
        };

        let t = &mut cfg.train;
        if let Some(seed) = overrides.seed {
            t.seed = seed;
        }
        if let Some(opt) = &overrides.optimizer {
            t.gen_optimizer = parse_optimizer("--optimizer", opt)?;
            t.disc_optimizer = t.gen_optimizer;
        }
        if !lr_set.0 {
            t.gen_lr = t.gen_optimizer.default_lr();
        }
        if !lr_set.1 {
            t.disc_lr = t.disc_optimizer.default_lr();
        }
        if let Some(n) = overrides.iters {
            t.iterations = n;
        }
        if let Some(b) = overrides.batch {
            t.batch_size = b;
        }
        if let Some(c) = overrides.clip {
            t.clip = c;
        }
        if let Some(out) = &overrides.out {
            cfg.out_dir = out.clone();
        }
        if let Some(w) = overrides.workers {
            cfg.workers = w;
        }
        if let Some(c) = &overrides.checkpoint {
            cfg.checkpoint = Some(c.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Generator layers, with a one-hot condition layer in front for
    /// conditional runs.
    pub fn generator_tokens(&self) -> Vec<LayerToken> {
        let mut tokens = self.dbn_layers.clone();
        if self.conditional_classes > 0 {
            tokens.insert(0, LayerToken::Dense(self.conditional_classes));
        }
        tokens
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.disc_layers.len() < 2 || *self.disc_layers.last().unwrap() != 1 {
            bail!("disc_layers must start with the sample width and end with 1");
        }
        let units = self.dbn_layers.last().and_then(LayerToken::units);
        match (units, self.dbn_layers.last()) {
            (Some(n), _) if n != self.disc_layers[0] => {
                bail!(
                    "generator output width {n} differs from critic input width {}",
                    self.disc_layers[0]
                )
            }
            (None, Some(_)) => {}
            _ => {}
        }
        architecture(&self.generator_tokens())?;
        for (name, v) in [
            ("loglik_samples", self.loglik_samples),
            ("loglik_points", self.loglik_points),
            ("sample_count", self.sample_count),
            ("grid_cols", self.grid_cols),
            ("bench_layers", self.bench_layers),
            ("bench_width", self.bench_width),
            ("bench_batch", self.bench_batch),
            ("bench_repeats", self.bench_repeats),
        ] {
            if v == 0 {
                bail!("{name} must be at least 1");
            }
        }
        if self.bench_workers.is_empty() || self.bench_workers.contains(&0) {
            bail!("bench_workers must list positive worker counts");
        }
        Ok(())
    }

    /// Binarization threshold, defaulting by dataset.
    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(match self.dataset {
            DatasetSpec::Idx { .. } => IDX_THRESHOLD,
            _ => DIGITS_THRESHOLD,
        })
    }

    /// Canonical text form; parsing it yields the same configuration.
    /// Worker count, output directory and checkpoint path are left out so
    /// that runs differing only in those produce identical text.
    pub fn render(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            writeln!(s, "{k} = {v}").expect("string write");
        };
        put("loss", t.loss.to_string());
        put("seed", t.seed.to_string());
        put("iterations", t.iterations.to_string());
        put("batch_size", t.batch_size.to_string());
        put("critic_steps", t.critic_steps.to_string());
        put("gen_optimizer", t.gen_optimizer.to_string());
        put("disc_optimizer", t.disc_optimizer.to_string());
        put("gen_lr", format!("{:?}", t.gen_lr));
        put("disc_lr", format!("{:?}", t.disc_lr));
        put("clip", format!("{:?}", t.clip));
        put("eval_every", t.eval_every.to_string());
        put("baseline", t.baseline.to_string());
        put("layer_parallel", t.layer_parallel.to_string());
        put(
            "dbn_layers",
            self.dbn_layers
                .iter()
                .map(LayerToken::render)
                .collect::<Vec<_>>()
                .join(","),
        );
        put(
            "disc_layers",
            self.disc_layers
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        match &self.dataset {
            DatasetSpec::Digits { path } => {
                put("dataset", "digits".into());
                put("data_path", path.display().to_string());
            }
            DatasetSpec::Idx { images, labels } => {
                put("dataset", "idx".into());
                put("data_path", images.display().to_string());
                if let Some(l) = labels {
                    put("label_path", l.display().to_string());
                }
            }
            DatasetSpec::SpikesCsv { path } => {
                put("dataset", "spikes_csv".into());
                put("data_path", path.display().to_string());
            }
            DatasetSpec::SynthSpikes {
                neurons,
                frames,
                rate,
                shared,
            } => {
                put("dataset", "synth_spikes".into());
                put("synth_neurons", neurons.to_string());
                put("synth_frames", frames.to_string());
                put("synth_rate", format!("{rate:?}"));
                put("synth_shared", format!("{shared:?}"));
            }
            DatasetSpec::Bernoulli { probs, samples } => {
                put("dataset", "bernoulli".into());
                put(
                    "bernoulli_probs",
                    probs.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(","),
                );
                put("bernoulli_samples", samples.to_string());
            }
        }
        put("threshold", format!("{:?}", self.threshold()));
        put("conditional_classes", self.conditional_classes.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("loglik_every", self.loglik_every.to_string());
        put("loglik_samples", self.loglik_samples.to_string());
        put("loglik_points", self.loglik_points.to_string());
        put("sample_count", self.sample_count.to_string());
        put("grid_cols", self.grid_cols.to_string());
        if let Some((h, w)) = self.image_shape {
            put("image_shape", format!("{h}x{w}"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::from_text("iteratons = 5\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("iteratons"));
    }

    #[test]
    fn flags_override_file() {
        let o = Overrides {
            seed: Some(9),
            iters: Some(3),
            loss: Some("wasserstein".into()),
            ..Default::default()
        };
        let cfg = RunConfig::from_text("seed = 1\niterations = 100\nloss = js\n", &o).unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.iterations, 3);
        assert_eq!(cfg.train.loss, LossKind::Wasserstein);
        assert_eq!(cfg.train.critic_steps, 5);
    }

    #[test]
    fn optimizer_sets_default_rates() {
        let o = Overrides {
            optimizer: Some("sgd".into()),
            ..Default::default()
        };
        let cfg = RunConfig::from_text("", &o).unwrap();
        assert_eq!(cfg.train.gen_lr, 1e-2);
        let cfg = RunConfig::from_text("optimizer = sgd\ngen_lr = 0.5\n", &Overrides::default()).unwrap();
        assert_eq!((cfg.train.gen_lr, cfg.train.disc_lr), (0.5, 1e-2));
    }

    #[test]
    fn render_round_trips() {
        let text = "loss = mal\nseed = 4\ndbn_layers = 2x3x3,conv:2:2:1,8\ndisc_layers = 8,5,1\n\
                    dataset = bernoulli\nbernoulli_probs = 0.8,0.2,0.5,0.1,0.1,0.1,0.1,0.1\nconditional_classes = 10\n";
        let cfg = RunConfig::from_text(text, &Overrides::default()).unwrap();
        let again = RunConfig::from_text(&cfg.render(), &Overrides::default()).unwrap();
        assert_eq!(cfg.render(), again.render());
        assert_eq!(again.train, cfg.train);
    }

    #[test]
    fn layer_tokens() {
        assert_eq!(LayerToken::parse("64").unwrap(), LayerToken::Dense(64));
        assert_eq!(
            LayerToken::parse("8x8").unwrap(),
            LayerToken::Map(MapShape::new(1, 8, 8))
        );
        assert_eq!(
            LayerToken::parse("conv:4:3").unwrap(),
            LayerToken::Conv {
                filters: 4,
                kernel: 3,
                stride: 1
            }
        );
        assert!(LayerToken::parse("conv:4").is_err());
        assert!(LayerToken::parse("0x3").is_err());
        assert!(LayerToken::parse("abc").is_err());
    }

    #[test]
    fn mismatched_widths_rejected() {
        assert!(RunConfig::from_text("dbn_layers = 4,3\ndisc_layers = 5,1\n", &Overrides::default()).is_err());
        assert!(RunConfig::from_text("dbn_layers = 4,3\ndisc_layers = 3,2\n", &Overrides::default()).is_err());
    }

    #[test]
    fn conditional_prepends_input_layer() {
        let cfg = RunConfig::from_text(
            "dbn_layers = 64,64,64\ndisc_layers = 64,64,1\nconditional_classes = 10\n",
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(architecture(&cfg.generator_tokens()).unwrap().input, 10);
    }
}
