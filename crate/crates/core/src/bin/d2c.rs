use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use d2c::cad::{CadSequence, DEFAULT_SEQ_LEN};
use d2c::checkpoint::Checkpoint;
use d2c::geom::{reconstruct, sample_shape, DEFAULT_SAMPLES};
use d2c::ingest::{drawing_from_svg_file, drawing_to_svg};
use d2c::nn::model::ViewMode;
use d2c::pipeline::{evaluate, infer_svg_files};
use d2c::record::{read_records, write_records, Record};
use d2c::svg::ViewLabel;
use d2c::synth::{generate_dataset, GenSpec};
use d2c::train::{env_seed, split_dataset, train, RunConfig};
use d2c::{Error, Result};

#[derive(Parser)]
#[command(name = "d2c", version, about = "Vector engineering drawings to parametric CAD sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic drawing/CAD pairs as JSON lines.
    GenData {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator settings file (`key = value`).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write each record's four views as SVG files here.
        #[arg(long)]
        svg_dir: Option<PathBuf>,
    },
    /// Tokenize one SVG drawing.
    Ingest {
        /// View label: front, top, right or iso.
        #[arg(long)]
        view: String,
        #[arg(long)]
        out: PathBuf,
        /// Write the normalized drawing back as SVG.
        #[arg(long)]
        svg_out: Option<PathBuf>,
        svg: PathBuf,
    },
    /// Shuffle and split a dataset into train/val/test files.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "0.9,0.05,0.05")]
        ratios: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override a config key, e.g. `--set batch_size=16` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Score a checkpoint on a record file.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Predict a CAD sequence from SVG drawings (front, top, right, iso order).
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        svg: Vec<PathBuf>,
        /// Expected view mode of the checkpoint: 1x, 3x or 4x.
        #[arg(long)]
        view_mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a solid from a sequence file and sample its surface.
    Reconstruct {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        points_out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Config(_) | Error::Parse { .. } | Error::Schema(_) | Error::Svg(_) => 3,
        Error::Range { .. }
        | Error::Sentinel(_)
        | Error::LengthExceeded { .. }
        | Error::UnsupportedCommand(_)
        | Error::PathParse { .. } => 3,
        Error::Geometry(_) | Error::Sampling(_) => 4,
        Error::Checkpoint(_) => 5,
        Error::NonFiniteLoss { .. } => 6,
        Error::Io(_) | Error::Json(_) => 7,
        Error::Contract(_) => 1,
    }
}

fn seed_or_env(seed: u64) -> Result<u64> {
    Ok(env_seed()?.unwrap_or(seed))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn load_records(path: &Path) -> Result<Vec<Record>> {
    let f = File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_records(BufReader::new(f), DEFAULT_SEQ_LEN, &[])
}

fn save_records(path: &Path, recs: &[Record]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_records(&mut w, recs)?;
    w.flush()?;
    Ok(())
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Input(format!("bad ratio '{p}'"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::Input(format!("expected three ratios, got '{s}'"))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { count, seed, spec, out, svg_dir } => {
            let spec = match spec {
                Some(p) => GenSpec::from_text(&read_text(&p)?)?,
                None => GenSpec::default(),
            };
            let recs = generate_dataset(&spec, count, seed_or_env(seed)?)?;
            save_records(&out, &recs)?;
            if let Some(dir) = svg_dir {
                std::fs::create_dir_all(&dir)?;
                for r in &recs {
                    for (v, d) in &r.views {
                        std::fs::write(dir.join(format!("{}_{}.svg", r.id, v.name())), drawing_to_svg(d))?;
                    }
                }
            }
            eprintln!("wrote {} records to {}", recs.len(), out.display());
        }
        Command::Ingest { view, out, svg_out, svg } => {
            let label = ViewLabel::from_name(&view).ok_or_else(|| Error::Input(format!("unknown view '{view}'")))?;
            let d = drawing_from_svg_file(&svg, label)?;
            let tokens: Vec<_> =
                d.content().iter().map(|t| json!({"kind": t.kind.name(), "params": t.params.0.to_vec()})).collect();
            let doc = json!({"view": label.name(), "tokens": tokens});
            std::fs::write(&out, format!("{doc}\n"))?;
            if let Some(p) = svg_out {
                std::fs::write(p, drawing_to_svg(&d))?;
            }
            eprintln!("{} tokens", d.content_len());
        }
        Command::Split { data, ratios, seed, out_dir } => {
            let recs = load_records(&data)?;
            let (a, b, c) = split_dataset(&recs, parse_ratios(&ratios)?, seed_or_env(seed)?)?;
            std::fs::create_dir_all(&out_dir)?;
            for (name, part) in [("train", &a), ("val", &b), ("test", &c)] {
                save_records(&out_dir.join(format!("{name}.jsonl")), part)?;
            }
            eprintln!("train {} / val {} / test {}", a.len(), b.len(), c.len());
        }
        Command::Train { config, data, val, out, resume, overrides, seed, epochs, max_steps } => {
            let mut cfg = match config {
                Some(p) => RunConfig::from_text(&read_text(&p)?)?,
                None => RunConfig::profile("desk")?,
            };
            for o in &overrides {
                let (k, v) = o.split_once('=').ok_or_else(|| Error::Input(format!("expected KEY=VALUE, got '{o}'")))?;
                cfg.set(k.trim(), v.trim())?;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(m) = max_steps {
                cfg.train.max_steps = m;
            }
            if let Some(s) = env_seed()? {
                cfg.train.seed = s;
            }
            let train_set = load_records(&data)?;
            let val_set = match val {
                Some(p) => load_records(&p)?,
                None => Vec::new(),
            };
            let outcome = train(&train_set, &val_set, &cfg, &out, resume.as_deref())?;
            eprintln!("{} steps; final checkpoint {}", outcome.steps, outcome.final_checkpoint.display());
        }
        Command::Eval { ckpt, data, report, points, seed } => {
            let model = Checkpoint::load(&ckpt)?.model()?;
            let recs = load_records(&data)?;
            let r = evaluate(&model, &recs, points, seed_or_env(seed)?)?;
            std::fs::write(&report, r.to_text())?;
            print!("{}", r.to_text());
        }
        Command::Infer { ckpt, svg, view_mode, out } => {
            let model = Checkpoint::load(&ckpt)?.model()?;
            if let Some(m) = view_mode {
                let m: ViewMode = m.parse()?;
                if m != model.config.view_mode {
                    return Err(Error::Input(format!(
                        "checkpoint was trained for view mode {}, not {m}",
                        model.config.view_mode
                    )));
                }
            }
            let paths: Vec<&Path> = svg.iter().map(PathBuf::as_path).collect();
            let seq = infer_svg_files(&model, &paths)?;
            match out {
                Some(p) => std::fs::write(p, seq.to_text())?,
                None => print!("{}", seq.to_text()),
            }
        }
        Command::Reconstruct { seq, points_out, points, seed } => {
            let seq = CadSequence::from_text(&read_text(&seq)?)?;
            let solid = reconstruct(&seq).map_err(|r| Error::Geometry(format!("invalid sequence: {r}")))?;
            let cloud = sample_shape(&solid, points, seed_or_env(seed)?)?;
            let mut w = BufWriter::new(File::create(&points_out)?);
            for p in &cloud.points {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
            w.flush()?;
            eprintln!("wrote {} points", cloud.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
