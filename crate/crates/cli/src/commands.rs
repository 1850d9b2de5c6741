use std::path::Path;

use serde_json::{json, Value};
use swprune::data::{load_checkpoint, write_atomic, write_checkpoint, Checkpoint};
use swprune::fmt::sig10;
use swprune::graph::{default_p_grid, lc_curve, write_lc_csv};
use swprune::harness::{
    choose_p, density_report, evaluate, heatmap_pgm, run_meta, run_pipeline, structure_initial,
    sweep_p, sweep_theta, train, write_density_csv, write_sweep_csv, write_sweep_layers_csv,
    Manifest,
};
use swprune::metrics::{layer_lc, write_lc_rows, LcRow, DEFAULT_CALIBRATION_PER_CLASS};
use swprune::SmallWorldConfig;

use crate::config::{load_dataset_file, Loaded};
use crate::{CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::WsCurve {
            n,
            k,
            p_list,
            trials,
            seed,
            out,
        } => ws_curve(n, k, p_list, trials, seed, &out),
        Command::Structure {
            config,
            out,
            overrides,
        } => structure(&Loaded::load(&config, &overrides)?, out.as_deref()),
        Command::Train {
            config,
            checkpoint,
            out,
            overrides,
        } => train_cmd(
            &Loaded::load(&config, &overrides)?,
            checkpoint.as_deref(),
            out.as_deref(),
        ),
        Command::Eval { checkpoint, data } => eval(&checkpoint, &data),
        Command::Sweep {
            config,
            theta_list,
            p_list,
            delta,
            out,
            overrides,
        } => sweep(
            &Loaded::load(&config, &overrides)?,
            theta_list,
            p_list,
            delta,
            out.as_deref(),
        ),
        Command::Report {
            checkpoint,
            out,
            data,
        } => report(&checkpoint, &out, data.as_deref()),
    }
}

/// Output directory plus a manifest that records every file written to it.
struct Outputs<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path, command: &str, config: Value) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            manifest: Manifest::new(command, config),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.manifest.add_output(name, bytes);
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.manifest
            .add_input(label, path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    fn finish(self) -> Result<()> {
        self.manifest.save(&self.dir.join("manifest.json"))?;
        Ok(())
    }
}

fn record_config_inputs(out: &mut Outputs<'_>, loaded: &Loaded) -> Result<()> {
    out.input("config", &loaded.path)?;
    let base = loaded.base.clone();
    for (i, p) in loaded.config.dataset.input_paths().iter().enumerate() {
        out.input(&format!("dataset[{i}] {}", p.display()), &base.join(p))?;
    }
    Ok(())
}

fn ws_curve(
    n: usize,
    k: usize,
    p_list: Option<Vec<f64>>,
    trials: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let ps = match p_list {
        Some(ps) if ps.is_empty() => return Err(CliError::Usage("--p-list is empty".into())),
        Some(ps) => ps,
        None => std::iter::once(0.0).chain(default_p_grid(13)).collect(),
    };
    let points = lc_curve(n, k, &ps, trials, seed)?;
    let mut buf = Vec::new();
    write_lc_csv(&mut buf, &points)?;
    write_atomic(out, &buf)?;
    for pt in &points {
        println!(
            "p={} L/L0={} C/C0={}",
            sig10(pt.p),
            sig10(pt.l_ratio()),
            sig10(pt.c_ratio())
        );
    }
    Ok(())
}

const STRUCTURE_HEADER: &str =
    "layer,kind,rows,cols,nodes,degree,pa,pb,divide_factor,theta,kept,total";

fn structure(loaded: &Loaded, out: Option<&Path>) -> Result<()> {
    let dir = loaded.out_dir(out)?;
    let cfg = &loaded.config;
    let spec = loaded.spec();
    let (net, layers, ck) = structure_initial(&spec, &cfg.sw, &cfg.train)?;
    let mut outputs = Outputs::new(&dir, "structure", loaded.echo())?;
    outputs.input("config", &loaded.path)?;

    let mut table = format!("{STRUCTURE_HEADER}\n");
    for (li, s) in &layers {
        let g = &s.geometry;
        table.push_str(&format!(
            "{li},{},{},{},{},{},{},{},{},{},{},{}\n",
            spec.layers[*li].kind(),
            g.rows,
            g.cols,
            g.nodes,
            g.degree,
            sig10(s.pa),
            sig10(s.pb),
            sig10(s.divide_factor),
            sig10(s.theta),
            s.kept(),
            s.mask.len()
        ));
    }
    print!("{table}");
    let (kept, total) = (net.kept_weights(), net.total_weights());
    let pruned = 100.0 * (1.0 - kept as f64 / total as f64);
    println!("total kept {kept} of {total} weights ({pruned:.2}% pruned)");

    outputs.write("structured.swnn", &write_checkpoint(&ck)?)?;
    outputs.write("structure.csv", table.as_bytes())?;
    outputs.manifest.results = json!({"kept_weights": kept, "total_weights": total});
    outputs.finish()
}

fn train_cmd(loaded: &Loaded, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let dir = loaded.out_dir(out)?;
    let cfg = &loaded.config;
    let spec = loaded.spec();
    let splits = loaded.dataset().load(&spec.input)?;
    let mut outputs = Outputs::new(&dir, "train", loaded.echo())?;
    record_config_inputs(&mut outputs, loaded)?;

    let (net, history) = match checkpoint {
        Some(path) => {
            outputs.input("checkpoint", path)?;
            let start = load_checkpoint(path)?;
            let mut net = start.to_network()?;
            if net.spec() != &spec {
                return Err(CliError::Usage(format!(
                    "{} holds a different network than the config",
                    path.display()
                )));
            }
            let history = train(&mut net, &splits.train, Some(&splits.test), &cfg.train)?;
            (net, history)
        }
        None => {
            let outcome = run_pipeline(&spec, &cfg.sw, &cfg.train, &splits)?;
            (outcome.network, outcome.history)
        }
    };
    let ck = Checkpoint::from_network(&net, run_meta("trained", &cfg.sw, &cfg.train, &spec)?)?;
    let accuracy = history.final_accuracy().unwrap_or(f64::NAN);
    println!("test accuracy {}", sig10(accuracy));

    outputs.write("trained.swnn", &write_checkpoint(&ck)?)?;
    outputs.csv("history.csv", |b| history.write_csv(b))?;
    outputs.manifest.results = json!({
        "test_accuracy": accuracy,
        "kept_weights": net.kept_weights(),
        "total_weights": net.total_weights(),
    });
    outputs.finish()
}

fn eval(checkpoint: &Path, data: &Path) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let net = ck.to_network()?;
    let splits = load_dataset_file(data)?.load(&net.spec().input)?;
    let acc = evaluate(&net, &splits.test)?;
    println!("accuracy {}", sig10(acc));
    Ok(())
}

fn sweep(
    loaded: &Loaded,
    theta_list: Option<Vec<f64>>,
    p_list: Option<Vec<f64>>,
    delta: f64,
    out: Option<&Path>,
) -> Result<()> {
    let dir = loaded.out_dir(out)?;
    let cfg = &loaded.config;
    let spec = loaded.spec();
    let splits = loaded.dataset().load(&spec.input)?;
    let (result, mut results) = match (theta_list, p_list) {
        (Some(thetas), None) => (
            sweep_theta(&spec, &thetas, cfg.sw.p, cfg.sw.seed, &cfg.train, &splits)?,
            json!({"sweep": "theta", "values": thetas}),
        ),
        (None, Some(ps)) => (
            sweep_p(&spec, &ps, &cfg.sw.theta, cfg.sw.seed, &cfg.train, &splits)?,
            json!({"sweep": "p", "values": ps}),
        ),
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --theta-list and --p-list".into(),
            ))
        }
    };
    if results["sweep"] == "p" {
        let chosen = choose_p(&result, delta)?;
        println!("chosen p {} (delta {})", sig10(chosen), sig10(delta));
        results["chosen_p"] = json!(chosen);
        results["delta"] = json!(delta);
    }
    for pt in &result.points {
        println!(
            "p={} accuracy={} kept={}/{}",
            sig10(pt.p),
            sig10(pt.accuracy),
            pt.kept,
            pt.total
        );
    }
    let mut outputs = Outputs::new(&dir, "sweep", loaded.echo())?;
    record_config_inputs(&mut outputs, loaded)?;
    outputs.csv("sweep.csv", |b| write_sweep_csv(b, &result))?;
    outputs.csv("sweep_layers.csv", |b| write_sweep_layers_csv(b, &result))?;
    outputs.manifest.results = results;
    outputs.finish()
}

fn report(checkpoint: &Path, out: &Path, data: Option<&Path>) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let net = ck.to_network()?;
    let calibration = match data {
        Some(d) => Some(load_dataset_file(d)?.load(&net.spec().input)?.train),
        None => None,
    };
    let p = ck
        .meta()?
        .get("sw")
        .and_then(|sw| serde_json::from_value::<SmallWorldConfig>(sw.clone()).ok())
        .map_or(f64::NAN, |sw| sw.p);

    let mut outputs = Outputs::new(
        out,
        "report",
        json!({"checkpoint": checkpoint.file_name().map(|n| n.to_string_lossy().into_owned())}),
    )?;
    outputs.input("checkpoint", checkpoint)?;
    if let Some(d) = data {
        outputs.input("data", d)?;
    }
    let rows = density_report(&ck)?;
    outputs.csv("density.csv", |b| write_density_csv(b, &rows))?;

    let mut lc_rows = Vec::new();
    for row in &rows {
        let is_conv = row.kind == "conv";
        if is_conv && calibration.is_none() {
            eprintln!(
                "note: layer {} is convolutional; pass --data for its L/C",
                row.layer
            );
            continue;
        }
        let report = layer_lc(
            &net,
            row.layer,
            calibration.as_ref(),
            DEFAULT_CALIBRATION_PER_CLASS,
        )?;
        lc_rows.push(LcRow {
            theta: 1.0 - row.ratio(),
            p,
            report,
        });
    }
    outputs.csv("lc.csv", |b| write_lc_rows(b, &lc_rows))?;
    for row in &rows {
        outputs.write(
            &format!("heatmap_layer{}.pgm", row.layer),
            &heatmap_pgm(&ck, row.layer)?,
        )?;
        println!(
            "layer {} {}: kept {}/{} ({})",
            row.layer,
            row.kind,
            row.kept,
            row.total,
            sig10(row.ratio())
        );
    }
    outputs.finish()
}
