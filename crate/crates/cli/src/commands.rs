use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use koopman_core::snapshot_csv::{fmt_f64, read_snapshots_file, write_snapshots};
use koopman_core::systems::generate_snapshots;
use koopman_core::{fit_model, full_report, Dictionary, FitOptions, KoopmanError, KoopmanModel};
use serde_json::json;

use crate::config::{read_json, FitConfig, SimulateConfig};
use crate::CliError;

type CmdResult = Result<(), CliError>;

fn load_model(path: &Path) -> Result<KoopmanModel, KoopmanError> {
    let text = std::fs::read_to_string(path)?;
    KoopmanModel::from_json(&text).map_err(|e| match e {
        KoopmanError::Json { path: p, message } => KoopmanError::Json {
            path: format!("{}: {p}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn simulate(config: &Path, steps: Option<usize>) -> CmdResult {
    let cfg: SimulateConfig = read_json(config)?;
    let steps = steps
        .or(cfg.steps)
        .ok_or_else(|| CliError::Usage("number of steps missing: pass --steps or set \"steps\"".into()))?;
    let sys = cfg.reference_system()?;
    let generated = generate_snapshots(&sys, &cfg.initial, steps, cfg.seed)?;
    for w in &generated.warnings {
        log::warn!("{w}");
    }
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    write_snapshots(&mut out, &generated.data)?;
    out.flush()?;
    Ok(())
}

pub fn fit(config: Option<&Path>, input: Option<PathBuf>, output: Option<PathBuf>, json_summary: bool) -> CmdResult {
    let cfg: FitConfig = match config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    let base = config.and_then(Path::parent).unwrap_or(Path::new(""));
    let input = input
        .or(cfg.input.as_ref().map(|p| base.join(p)))
        .ok_or_else(|| CliError::Usage("no input data: pass --input or set \"input\"".into()))?;
    let output = output
        .or(cfg.output.as_ref().map(|p| base.join(p)))
        .ok_or_else(|| CliError::Usage("no model path: pass --model or set \"output\"".into()))?;
    if input.as_os_str().is_empty() || output.as_os_str().is_empty() {
        return Err(CliError::Usage("input and model paths must be nonempty".into()));
    }

    let data = read_snapshots_file(&input)?;
    let dict = match &cfg.dictionary {
        Some(d) => d.build()?,
        None => Dictionary::state_coordinates(data.state_dim())?,
    };
    let opts = FitOptions {
        regularizer: cfg.regularizer.clone(),
        koopman_regularizer: cfg.koopman_regularizer.clone(),
    };
    log::info!("fitting {} functions on {} snapshot pairs", dict.len(), data.len());
    let model = fit_model(&dict, &data, &opts)?;
    for w in &model.meta.warnings {
        log::warn!("{w}");
    }
    std::fs::write(&output, model.to_json())?;
    log::info!("model written to {}", output.display());

    let report = if cfg.options.diagnostics { Some(full_report(&dict, &data, &model)?) } else { None };

    if json_summary {
        let eig: Vec<_> = model
            .eigenvalues
            .iter()
            .map(|l| json!({"re": l.re, "im": l.im, "modulus": l.norm()}))
            .collect();
        let mut summary = json!({
            "model": output.display().to_string(),
            "n_basis": model.n_basis(),
            "samples": data.len(),
            "outputs": model.output_dim(),
            "eigenvalues": eig,
            "gram_condition": model.meta.gram_condition,
            "output_condition": model.meta.output_condition,
            "eig_condition": model.meta.eig_condition,
            "warnings": model.meta.warnings,
        });
        if cfg.options.compute_modes {
            summary["mode_magnitudes"] = json!(mode_magnitudes(&model));
        }
        if let Some(r) = &report {
            summary["diagnostics"] = serde_json::to_value(r).expect("report serialises");
        }
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
        return Ok(());
    }

    let mut text = String::new();
    text += &format!("model: {}\n", output.display());
    text += &format!("n_L = {}, m = {}, p = {}\n", model.n_basis(), data.len(), model.output_dim());
    if let Some(c) = model.meta.gram_condition {
        text += &format!("condition (K solve): {c:.6e}\n");
    }
    if let Some(c) = model.meta.output_condition {
        text += &format!("condition (W solve): {c:.6e}\n");
    }
    text += &format!("condition (eigenvectors): {:.6e}\n", model.meta.eig_condition);
    text += &format!("{:>5}  {:>14}  {:>14}  {:>12}\n", "index", "re", "im", "modulus");
    for (i, l) in model.eigenvalues.iter().enumerate() {
        text += &format!("{i:>5}  {:>14.6e}  {:>14.6e}  {:>12.6e}\n", l.re, l.im, l.norm());
    }
    if cfg.options.compute_modes {
        text += "mode magnitudes (rows: outputs)\n";
        for row in mode_magnitudes(&model) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            text += &format!("  {}\n", cells.join("  "));
        }
    }
    if let Some(r) = &report {
        text += &r.render_text();
    }
    print!("{text}");
    Ok(())
}

/// `|c_ij|`, one row per output.
fn mode_magnitudes(model: &KoopmanModel) -> Vec<Vec<f64>> {
    model
        .modes
        .row_iter()
        .map(|r| r.iter().map(|c| c.norm()).collect())
        .collect()
}

fn parse_state(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("--x0: '{s}' is not a finite number")))
        })
        .collect()
}

pub fn predict(model_path: &Path, x0: &str, steps: u32) -> CmdResult {
    let model = load_model(model_path)?;
    let x0 = parse_state(x0)?;
    let n = model.dictionary.state_dim();
    if x0.len() != n {
        return Err(KoopmanError::InputShape(format!("--x0 has {} components, model state dimension is {n}", x0.len())).into());
    }
    let traj = model.predict_trajectory(&x0, steps)?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut header = vec!["k".to_string()];
    header.extend((1..=traj.ncols()).map(|i| format!("y{i}")));
    writeln!(out, "{}", header.join(","))?;
    for (k, row) in traj.row_iter().enumerate() {
        let mut fields = vec![k.to_string()];
        fields.extend(row.iter().map(|&v| fmt_f64(v)));
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn eig(model_path: &Path, modes: bool) -> CmdResult {
    let model = load_model(model_path)?;
    let mags = mode_magnitudes(&model);
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut header = vec!["index", "re", "im", "modulus", "angle"].into_iter().map(String::from).collect::<Vec<_>>();
    if modes {
        header.extend((1..=model.output_dim()).map(|i| format!("mode_y{i}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for (j, l) in model.eigenvalues.iter().enumerate() {
        let mut fields = vec![j.to_string(), fmt_f64(l.re), fmt_f64(l.im), fmt_f64(l.norm()), fmt_f64(l.im.atan2(l.re))];
        if modes {
            fields.extend(mags.iter().map(|row| fmt_f64(row[j])));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn diagnose(model_path: &Path, input: &Path, json_out: bool) -> CmdResult {
    let model = load_model(model_path)?;
    let data = read_snapshots_file(input)?;
    let report = full_report(&model.dictionary, &data, &model)?;
    if json_out {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    } else {
        print!("{}", report.render_text());
    }
    Ok(())
}
