use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use mcne::eval::{
    basis_utilization, memory_report, preset, run_classification_eval, run_linkpred_eval, unused_fraction,
    CompressionRatios, EvalReport, Layout, LogRegConfig, MemoryModel, DATASET_PRESETS,
};
use mcne::graph::{load_edge_list, load_labels, split_edges};
use mcne::io;
use mcne::mcne_p::train_mcne_p;
use mcne::mcne_t::{train_mcne_t, DEFAULT_GCN_HIDDEN};
use mcne::pretrain::train_sgns;
use mcne::{CodeFlavor, Matrix, ReconstructionGradient, SgnsConfig, TrainConfig};

use crate::config::{self, FileConfig};
use crate::{Cli, CodeArgs, Command, CompressArgs, EvalArgs, MemoryArgs, MemoryModelArgs, PretrainArgs, TrainE2eArgs};

/// Embedding width of the benchmark runs.
const DEFAULT_DIM: usize = 256;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_KD: (usize, usize) = (16, 8);

/// Resolved settings, printed as the run header.
struct Header {
    lines: Vec<String>,
}

impl Header {
    fn new(command: &str) -> Self {
        Header {
            lines: vec![format!("# mcne {command}")],
        }
    }

    /// Flag beats config file beats default; the source is recorded.
    fn pick<T: Display + Clone>(&mut self, key: &str, flag: Option<T>, file: Option<T>, default: T) -> T {
        let (v, src) = match (flag, file) {
            (Some(v), _) => (v, "flag"),
            (None, Some(v)) => (v, "config"),
            (None, None) => (default, "default"),
        };
        self.lines.push(format!("{key} = {v} ({src})"));
        v
    }

    fn pick_opt<T: Display + Clone>(&mut self, key: &str, flag: Option<T>, file: Option<T>) -> Option<T> {
        let (v, src) = match (flag, file) {
            (Some(v), _) => (Some(v), "flag"),
            (None, Some(v)) => (Some(v), "config"),
            (None, None) => (None, "unset"),
        };
        let shown = v.as_ref().map_or_else(|| "-".to_string(), |v| v.to_string());
        self.lines.push(format!("{key} = {shown} ({src})"));
        v
    }

    fn note(&mut self, key: &str, value: impl Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    fn print(&self) {
        for l in &self.lines {
            println!("{l}");
        }
    }
}

fn require_file(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    let path = path.ok_or_else(|| anyhow!("missing required input: pass --{flag} (or set it in the config file)"))?;
    if !path.is_file() {
        bail!("--{flag}: {} is not a readable file", path.display());
    }
    Ok(path)
}

fn check_optional(path: &Option<PathBuf>, flag: &str) -> Result<()> {
    if let Some(p) = path {
        if !p.is_file() {
            bail!("--{flag}: {} is not a readable file", p.display());
        }
    }
    Ok(())
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out_dir = cli.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a, &file, seed, &out_dir),
        Command::Compress(a) => cmd_compress(a, &file, seed, &out_dir),
        Command::TrainE2e(a) => cmd_train_e2e(a, &file, seed, &out_dir),
        Command::Eval(a) => cmd_eval(a, &file, seed, &out_dir),
        Command::ReportMemory(a) => cmd_report_memory(a, &file, &out_dir),
    }
}

fn cmd_pretrain(a: PretrainArgs, file: &FileConfig, seed: u64, out_dir: &Path) -> Result<()> {
    let f = &file.pretrain;
    let edges = require_file(a.edges.or(f.edges.clone()), "edges")?;
    let d = SgnsConfig::default();
    let mut h = Header::new("pretrain");
    h.note("edges", edges.display());
    h.note("seed", seed);
    let cfg = SgnsConfig {
        dim: h.pick("dim", a.dim, f.dim, DEFAULT_DIM),
        walks_per_node: h.pick("walks_per_node", a.walks_per_node, f.walks_per_node, d.walks_per_node),
        walk_length: h.pick("walk_length", a.walk_length, f.walk_length, d.walk_length),
        window: h.pick("window", a.window, f.window, d.window),
        negatives: h.pick("negatives", a.negatives, f.negatives, d.negatives),
        epochs: h.pick("epochs", a.epochs, f.epochs, d.epochs),
        lr: h.pick("lr", a.lr, f.lr, d.lr),
        seed,
    };
    h.print();
    prepare_out_dir(out_dir)?;

    let start = Instant::now();
    let g = load_edge_list(&edges)?;
    let table = train_sgns::<f64>(&g, &cfg)?;
    let path = out_dir.join("embeddings.txt");
    io::save_embeddings(&path, &table)?;
    println!(
        "nodes = {}, dim = {}, wall_time = {:.2}s, wrote {}",
        table.node_count(),
        table.dim(),
        start.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

/// Code settings after merging flags, config and defaults.
struct CodeSettings {
    s: usize,
    t: usize,
    flavor: CodeFlavor,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    layers: usize,
    hidden: Option<usize>,
}

/// Code settings read from one config-file section.
struct CodeFile {
    s: Option<usize>,
    t: Option<usize>,
    flavor: Option<String>,
    k: Option<usize>,
    kd_d: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    layers: Option<usize>,
    hidden: Option<usize>,
}

macro_rules! code_file {
    ($sec:expr) => {
        CodeFile {
            s: $sec.s,
            t: $sec.t,
            flavor: $sec.flavor.clone(),
            k: $sec.k,
            kd_d: $sec.kd_d,
            epochs: $sec.epochs,
            lr: $sec.lr,
            batch_size: $sec.batch_size,
            layers: $sec.layers,
            hidden: $sec.hidden,
        }
    };
}

fn resolve_code(h: &mut Header, a: CodeArgs, f: CodeFile) -> Result<CodeSettings> {
    let defaults = TrainConfig::default();
    let flavor_name = h.pick("flavor", a.flavor, f.flavor, "multi_hot".to_string());
    let (flavor, s, t) = match flavor_name.as_str() {
        "multi_hot" => {
            let s = h.pick("s", a.s, f.s, defaults.s);
            let t = h.pick("t", a.t, f.t, defaults.t);
            (CodeFlavor::MultiHot, s, t)
        }
        "kd" => {
            let kk = h.pick("K", a.kd_k, f.k, DEFAULT_KD.0);
            let dd = h.pick("D", a.kd_d, f.kd_d, DEFAULT_KD.1);
            let s_req = a.s.or(f.s);
            let t_req = a.t.or(f.t);
            if let Some(s) = s_req {
                if s != kk * dd {
                    bail!("kd flavor needs s = K·D, but K·D = {} and s = {s}", kk * dd);
                }
            }
            if let Some(t) = t_req {
                if t != dd {
                    bail!("kd flavor needs t = D, but D = {dd} and t = {t}");
                }
            }
            h.note("s", kk * dd);
            h.note("t", dd);
            (CodeFlavor::Kd { block_size: kk, blocks: dd }, kk * dd, dd)
        }
        other => bail!("unknown --flavor {other:?} (expected multi_hot or kd)"),
    };
    Ok(CodeSettings {
        s,
        t,
        flavor,
        epochs: h.pick("epochs", a.epochs, f.epochs, defaults.epochs),
        lr: h.pick("lr", a.lr, f.lr, defaults.lr),
        batch_size: h.pick("batch_size", a.batch_size, f.batch_size, defaults.batch_size),
        layers: h.pick("layers", a.layers, f.layers, defaults.encoder_layers),
        hidden: a.hidden.or(f.hidden),
    })
}

fn cmd_compress(a: CompressArgs, file: &FileConfig, seed: u64, out_dir: &Path) -> Result<()> {
    let f = &file.compress;
    let embeddings = require_file(a.embeddings.or(f.embeddings.clone()), "embeddings")?;
    let mut h = Header::new("compress");
    h.note("embeddings", embeddings.display());
    h.note("seed", seed);
    let code = resolve_code(&mut h, a.code, code_file!(f))?;
    let defaults = TrainConfig::default();
    let validation_fraction = h.pick(
        "validation_fraction",
        a.validation_fraction,
        f.validation_fraction,
        defaults.validation_fraction,
    );
    h.note("tau", "1.0 - 0.1 per 100 epochs, floor 0.5");
    let table = io::load_embeddings::<f64>(&embeddings)?;
    h.note("d", table.dim());
    let hidden = code.hidden.unwrap_or((code.s / 2).max(1));
    h.note("hidden", hidden);
    h.print();
    prepare_out_dir(out_dir)?;

    let cfg = TrainConfig {
        s: code.s,
        t: code.t,
        d: table.dim(),
        flavor: code.flavor,
        encoder_layers: code.layers,
        hidden_width: Some(hidden),
        lr: code.lr,
        batch_size: code.batch_size,
        epochs: code.epochs,
        validation_fraction,
        seed,
        ..defaults
    };
    let start = Instant::now();
    let run = train_mcne_p(&table, &cfg)?;
    let cb_path = out_dir.join("codebook.txt");
    io::save_codebook(&cb_path, &run.codebook)?;
    io::write_text(out_dir.join("compress_log.csv"), &io::format_mcne_p_log(&run.log))?;
    let counts = basis_utilization(&run.codebook);
    println!(
        "nodes = {}, best_epoch = {}, best_val_loss = {:.6}, unused_basis = {:.1}%, wall_time = {:.2}s, wrote {}",
        run.codebook.node_count(),
        run.best_epoch.map_or_else(|| "init".to_string(), |e| e.to_string()),
        run.best_val_loss,
        100.0 * unused_fraction(&counts),
        start.elapsed().as_secs_f64(),
        cb_path.display()
    );
    Ok(())
}

fn parse_reconstruction_gradient(name: &str) -> Result<ReconstructionGradient> {
    Ok(match name {
        "compressor_only" => ReconstructionGradient::CompressorOnly,
        "detached_target" => ReconstructionGradient::DetachedTarget,
        "joint" => ReconstructionGradient::Joint,
        other => bail!("unknown --reconstruction-gradient {other:?} (expected compressor_only, detached_target or joint)"),
    })
}

fn cmd_train_e2e(a: TrainE2eArgs, file: &FileConfig, seed: u64, out_dir: &Path) -> Result<()> {
    let f = &file.train_e2e;
    let edges = require_file(a.edges.or(f.edges.clone()), "edges")?;
    let mut h = Header::new("train-e2e");
    h.note("edges", edges.display());
    h.note("seed", seed);
    let code = resolve_code(&mut h, a.code, code_file!(f))?;
    let defaults = TrainConfig::default();
    let dim = h.pick("dim", a.dim, f.dim, DEFAULT_DIM);
    let hidden = code.hidden.unwrap_or(DEFAULT_GCN_HIDDEN);
    h.note("hidden", hidden);
    let input_dim = h.pick("input_dim", a.input_dim, f.input_dim, dim);
    let beta = h.pick("beta", a.beta, f.beta, defaults.beta);
    let rg_name = h.pick(
        "reconstruction_gradient",
        a.reconstruction_gradient,
        f.reconstruction_gradient.clone(),
        "compressor_only".to_string(),
    );
    let reconstruction_gradient = parse_reconstruction_gradient(&rg_name)?;
    let holdout = h.pick_opt("linkpred_holdout", a.linkpred_holdout, f.linkpred_holdout);
    h.note("tau", "1.0 - 0.1 per 100 epochs, floor 0.5");
    h.print();
    prepare_out_dir(out_dir)?;

    let start = Instant::now();
    let full = load_edge_list(&edges)?;
    let graph = match holdout {
        Some(frac) => {
            let split = split_edges(&full, frac, seed)?;
            io::write_text(out_dir.join("split.txt"), &io::format_split(&split))?;
            io::write_text(out_dir.join("train_edges.txt"), &io::format_edge_list(&split.train_graph))?;
            println!(
                "held out {} of {} edges ({} negatives), wrote split.txt",
                split.positive_pairs.len(),
                full.edge_count(),
                split.negative_pairs.len()
            );
            split.train_graph
        }
        None => full,
    };
    let cfg = TrainConfig {
        s: code.s,
        t: code.t,
        d: dim,
        flavor: code.flavor,
        encoder_layers: code.layers,
        hidden_width: Some(hidden),
        input_dim: Some(input_dim),
        lr: code.lr,
        batch_size: code.batch_size,
        epochs: code.epochs,
        beta,
        reconstruction_gradient,
        seed,
        ..defaults
    };
    let run = train_mcne_t::<f64>(&graph, &cfg)?;
    io::save_codebook(out_dir.join("codebook.txt"), &run.codebook)?;
    io::save_embeddings(out_dir.join("embeddings.txt"), &run.embeddings)?;
    io::write_text(out_dir.join("train_log.csv"), &io::format_mcne_t_log(&run.log))?;
    println!(
        "nodes = {}, best_epoch = {}, best_loss = {}, skipped_anchors = {}, wall_time = {:.2}s, wrote codebook.txt, embeddings.txt",
        run.codebook.node_count(),
        run.best_epoch.map_or_else(|| "init".to_string(), |e| e.to_string()),
        run.best_loss.map_or_else(|| "-".to_string(), |l| format!("{l:.6}")),
        run.skipped_isolated + run.skipped_saturated,
        start.elapsed().as_secs_f64(),
    );
    Ok(())
}

fn memory_model(h: &mut Header, a: MemoryModelArgs, float_bytes: Option<u64>, int_bytes: Option<u64>) -> Result<MemoryModel> {
    let d = MemoryModel::default();
    let mm = MemoryModel {
        float_bytes: h.pick("float_bytes", a.float_bytes, float_bytes, d.float_bytes),
        int_bytes: h.pick("int_bytes", a.int_bytes, int_bytes, d.int_bytes),
    };
    mm.validate()?;
    Ok(mm)
}

fn cmd_eval(a: EvalArgs, file: &FileConfig, seed: u64, out_dir: &Path) -> Result<()> {
    let f = &file.eval;
    let embeddings = a.embeddings.or(f.embeddings.clone());
    let codebook = a.codebook.or(f.codebook.clone());
    let labels = a.labels.or(f.labels.clone());
    let split = a.split.or(f.split.clone());
    if embeddings.is_none() && codebook.is_none() {
        bail!("missing required input: pass --embeddings or --codebook");
    }
    if embeddings.is_some() && codebook.is_some() {
        bail!("pass only one of --embeddings and --codebook");
    }
    if labels.is_none() && split.is_none() {
        bail!("nothing to evaluate: pass --labels and/or --split");
    }
    check_optional(&embeddings, "embeddings")?;
    check_optional(&codebook, "codebook")?;
    check_optional(&labels, "labels")?;
    check_optional(&split, "split")?;

    let mut h = Header::new("eval");
    h.note("seed", seed);
    let train_fraction = h.pick("train_fraction", a.train_fraction, f.train_fraction, 0.1);
    let runs = h.pick("runs", a.runs, f.runs, 5);
    let mm = memory_model(&mut h, a.memory, f.float_bytes, f.int_bytes)?;
    let lr_cfg = LogRegConfig::default();
    h.note("classifier", format!("one-vs-rest logistic regression, l2 = {}, lr = {}, epochs = {}", lr_cfg.l2, lr_cfg.lr, lr_cfg.epochs));
    h.print();
    prepare_out_dir(out_dir)?;

    let (features, cb): (Matrix, _) = match (&embeddings, &codebook) {
        (Some(p), _) => (io::load_embeddings::<f64>(p)?.matrix, None),
        (_, Some(p)) => {
            let cb = io::load_codebook::<f64>(p)?;
            (cb.reconstruct_all(), Some(cb))
        }
        _ => unreachable!(),
    };
    let (n, d) = features.shape();
    let mut report = EvalReport {
        runs,
        ..Default::default()
    };
    if let Some(p) = &labels {
        let table = load_labels(p, n)?;
        let r = run_classification_eval(&features, &table, train_fraction, runs, seed, &lr_cfg)?;
        println!("node classification (T_r = {train_fraction}, {runs} runs): micro_f1 = {:.4}, macro_f1 = {:.4}", r.micro_f1, r.macro_f1);
        report.micro_f1 = Some(r.micro_f1);
        report.macro_f1 = Some(r.macro_f1);
    }
    if let Some(p) = &split {
        let s = io::load_split(p)?;
        if s.train_graph.node_count() != n {
            bail!("--split covers {} nodes but the embeddings have {n} rows", s.train_graph.node_count());
        }
        let auc = run_linkpred_eval(&features, &s)?;
        println!("link prediction: auc = {auc:.4} ({} positive, {} negative pairs)", s.positive_pairs.len(), s.negative_pairs.len());
        report.auc = Some(auc);
    }

    let one_hot = Layout::OneHot { nodes: n as u64, dim: d as u64 };
    let base = memory_report(one_hot, mm);
    let layout = match &cb {
        Some(cb) => match cb.flavor() {
            CodeFlavor::MultiHot => Layout::MultiHot { s: cb.s() as u64, t: cb.t() as u64, dim: d as u64, nodes: n as u64 },
            CodeFlavor::Kd { block_size, blocks } => Layout::Kd {
                block_size: block_size as u64,
                blocks: blocks as u64,
                dim: d as u64,
                nodes: n as u64,
            },
        },
        None => one_hot,
    };
    let cost = memory_report(layout, mm);
    let ratios = CompressionRatios::new(&base, n as u64, d as u64, &cost);
    println!(
        "memory: {layout} params = {} ({}M), bytes = {} ({} MB); one_hot {}M / {} MB; ratio params {:.2}, bytes {:.2}",
        cost.params,
        cost.params_millions_display(),
        cost.bytes,
        cost.megabytes_display(),
        base.params_millions_display(),
        base.megabytes_display(),
        ratios.params_full,
        ratios.bytes_full
    );
    report.param_count = Some(cost.params);
    report.byte_cost = Some(cost.bytes);
    report.compression_ratio_params = Some(ratios.params_full);
    report.compression_ratio_bytes = Some(ratios.bytes_full);

    if let Some(cb) = &cb {
        let counts = basis_utilization(cb);
        let mut csv = String::from("basis,count\n");
        for (k, c) in counts.iter().enumerate() {
            csv.push_str(&format!("{k},{c}\n"));
        }
        io::write_text(out_dir.join("basis_utilization.csv"), &csv)?;
        println!("basis utilization: {:.1}% of {} basis vectors unused", 100.0 * unused_fraction(&counts), counts.len());
    }
    io::write_text(out_dir.join("eval_report.csv"), &report.to_csv())?;
    println!("wrote {}", out_dir.join("eval_report.csv").display());
    Ok(())
}

/// CSV header and one row per (dataset, layout).
pub fn memory_table(rows: &[(String, Layout, Vec<Layout>)], mm: MemoryModel) -> String {
    let mut csv = String::from(
        "dataset,layout,params,bytes,params_millions,megabytes,ratio_params_full,ratio_params_matrix_only,ratio_params_displayed,ratio_bytes_full,ratio_bytes_displayed\n",
    );
    for (name, baseline, layouts) in rows {
        let base = memory_report(*baseline, mm);
        for &l in std::iter::once(baseline).chain(layouts) {
            let c = memory_report(l, mm);
            let r = CompressionRatios::new(&base, baseline.nodes(), baseline.dim(), &c);
            csv.push_str(&format!(
                "{name},{l},{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
                c.params,
                c.bytes,
                c.params_millions_display().replace(',', ""),
                c.megabytes_display().replace(',', ""),
                r.params_full,
                r.params_matrix_only,
                r.params_displayed,
                r.bytes_full,
                r.bytes_displayed
            ));
        }
    }
    csv
}

fn cmd_report_memory(a: MemoryArgs, file: &FileConfig, out_dir: &Path) -> Result<()> {
    let f = &file.memory;
    let mut h = Header::new("report-memory");
    let mm = memory_model(&mut h, a.memory, f.float_bytes, f.int_bytes)?;
    let nodes = a.nodes.or(f.nodes);
    let mut rows = Vec::new();
    if let Some(nodes) = nodes {
        let dim = h.pick("dim", a.dim, f.dim, DEFAULT_DIM as u64);
        h.note("nodes", nodes);
        let baseline = Layout::OneHot { nodes, dim };
        let kd = (a.kd_k.or(f.k), a.kd_d.or(f.kd_d));
        let layout = match kd {
            (Some(block_size), Some(blocks)) => {
                h.note("layout", format!("kd K = {block_size}, D = {blocks}"));
                Layout::Kd { block_size, blocks, dim, nodes }
            }
            (None, None) => {
                let s = h.pick("s", a.s, f.s, TrainConfig::default().s as u64);
                let t = h.pick("t", a.t, f.t, TrainConfig::default().t as u64);
                Layout::MultiHot { s, t, dim, nodes }
            }
            _ => bail!("kd layout needs both --k and --kd-d"),
        };
        rows.push(("custom".to_string(), baseline, vec![layout]));
    } else {
        let which = h.pick("dataset", a.dataset, f.dataset.clone(), "all".to_string());
        let presets: Vec<_> = if which == "all" {
            DATASET_PRESETS.iter().collect()
        } else {
            vec![preset(&which).ok_or_else(|| anyhow!("unknown --dataset {which:?}"))?]
        };
        for p in presets {
            rows.push((p.name.to_string(), p.one_hot(), vec![p.multi_hot(), p.kd()]));
        }
    }
    h.print();
    prepare_out_dir(out_dir)?;

    println!("{:<12} {:<26} {:>16} {:>12}", "dataset", "layout", "params (M)", "memory (MB)");
    for (name, baseline, layouts) in &rows {
        let base = memory_report(*baseline, mm);
        for l in std::iter::once(baseline).chain(layouts) {
            let c = memory_report(*l, mm);
            let r = CompressionRatios::new(&base, baseline.nodes(), baseline.dim(), &c);
            let (pm, mb) = if l == baseline {
                (c.params_millions_display(), c.megabytes_display())
            } else {
                (
                    format!("{} ({:.2})", c.params_millions_display(), r.params_displayed),
                    format!("{} ({:.2})", c.megabytes_display(), r.bytes_displayed),
                )
            };
            println!("{name:<12} {:<26} {pm:>16} {mb:>12}", l.to_string());
        }
    }
    let path = out_dir.join("memory_report.csv");
    io::write_text(&path, &memory_table(&rows, mm))?;
    println!("wrote {}", path.display());
    Ok(())
}
