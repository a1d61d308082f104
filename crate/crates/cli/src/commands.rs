use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mlca_core::estimators::StageTrace;
use mlca_core::selection::write_selection_csv;
use mlca_core::{
    fit, load_csv, select_sequential, select_simultaneous, ColumnRoles, Dataset, EmControl, FitOptions, ModelSpec,
    TrueModel,
};

use crate::args::{Cli, Command, FitArgs, ModelArgs, PlotArgs, SelectArgs, SimulateArgs, SummaryArgs};
use crate::document::FitDocument;
use crate::error::{CliError, Result};
use crate::plot::{render_svg, PlotOptions};
use crate::report::{render_fit, render_selection};

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli.verbose, stdout),
        Command::Select(a) => cmd_select(a, cli.verbose, stdout),
        Command::Plot(a) => cmd_plot(a),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Summary(a) => cmd_summary(a, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn load_dataset(m: &ModelArgs) -> Result<Dataset> {
    if !m.data.is_file() {
        return Err(CliError::io(
            &m.data,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let table = load_csv(&m.data, &m.items, m.group.as_deref(), &m.covariates, &m.group_covariates)?;
    let roles = ColumnRoles {
        items: m.items.clone(),
        group: m.group.clone(),
        low_covariates: m.covariates.clone(),
        high_covariates: m.group_covariates.clone(),
    };
    Ok(Dataset::build(&table, &roles)?)
}

fn options(m: &ModelArgs) -> FitOptions {
    FitOptions {
        ctrl: EmControl {
            max_iter: m.max_iter,
            tol: m.tol,
            ..EmControl::default()
        },
        seed: m.seed,
        init: m.init,
    }
}

fn spec_for(m: &ModelArgs, n_low: usize, n_high: usize) -> Result<ModelSpec> {
    if n_high > 1 && m.group.is_none() {
        return Err(CliError::Usage("--group-classes above 1 needs --group".into()));
    }
    if !m.group_covariates.is_empty() && m.group.is_none() {
        return Err(CliError::Usage("--group-covariates needs --group".into()));
    }
    if m.cross_level && m.estimator != mlca_core::Estimator::TwoStage {
        return Err(CliError::Usage("--cross-level applies to the two_stage estimator only".into()));
    }
    let mut spec = ModelSpec::new(n_low, n_high).with_estimator(m.estimator);
    spec.low_covariates = !m.covariates.is_empty();
    spec.high_covariates = !m.group_covariates.is_empty();
    spec.cross_level_interaction = m.cross_level;
    Ok(spec)
}

/// Canonical command line for the CALL section.
fn call_string(sub: &str, m: &ModelArgs, classes: &str, group_classes: &str, extra: &[String]) -> String {
    let mut parts = vec![
        format!("mlca {sub}"),
        format!("--data {}", m.data.display()),
        format!("--items {}", m.items.join(",")),
        format!("--classes {classes}"),
    ];
    if let Some(g) = &m.group {
        parts.push(format!("--group {g}"));
        parts.push(format!("--group-classes {group_classes}"));
    }
    if !m.covariates.is_empty() {
        parts.push(format!("--covariates {}", m.covariates.join(",")));
    }
    if !m.group_covariates.is_empty() {
        parts.push(format!("--group-covariates {}", m.group_covariates.join(",")));
    }
    parts.push(format!("--estimator {}", m.estimator));
    if m.cross_level {
        parts.push("--cross-level".into());
    }
    parts.extend(extra.iter().cloned());
    // wrap long calls the way the summary shows them
    let mut lines = vec![String::new()];
    for p in parts {
        let cur = lines.last_mut().unwrap();
        if !cur.is_empty() && cur.len() + 1 + p.len() > 72 {
            lines.push(format!("    {p}"));
        } else {
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(&p);
        }
    }
    lines.join("\n")
}

fn log_stages(stages: &[StageTrace]) {
    for s in stages {
        for (k, ll) in s.trace.history.iter().enumerate() {
            eprintln!("[{}] iter {k:>4}  ll {ll:.6}", s.stage);
        }
    }
}

fn finish_fit(
    fit_result: &mlca_core::FitResult,
    call: String,
    m: &ModelArgs,
    verbose: bool,
    stdout: &mut dyn Write,
) -> Result<()> {
    if verbose {
        log_stages(&fit_result.stages);
    }
    let doc = FitDocument::new(fit_result, call, m.extended);
    emit(stdout, &render_fit(&doc))?;
    if let Some(path) = &m.out {
        doc.write(path)?;
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs, verbose: bool, stdout: &mut dyn Write) -> Result<()> {
    let m = &a.model;
    if a.classes == 0 || a.group_classes == 0 {
        return Err(CliError::Usage("class counts must be at least 1".into()));
    }
    let spec = spec_for(m, a.classes, a.group_classes)?;
    let data = load_dataset(m)?;
    let result = fit(&data, &spec, &options(m))?;
    let call = call_string("fit", m, &a.classes.to_string(), &a.group_classes.to_string(), &[]);
    finish_fit(&result, call, m, verbose, stdout)
}

fn cmd_select(a: &SelectArgs, verbose: bool, stdout: &mut dyn Write) -> Result<()> {
    let m = &a.model;
    // validate the flags once, with the largest cell
    spec_for(m, a.classes.hi, a.group_classes.hi)?;
    let data = load_dataset(m)?;
    let opts = options(m);
    let (t_range, m_range) = (a.classes.values(), a.group_classes.values());
    let sel = if a.simultaneous {
        select_simultaneous(&data, &t_range, &m_range, &opts, a.threads)?
    } else {
        select_sequential(&data, &t_range, &m_range, &opts)?
    };
    let chosen = (sel.best.spec.n_low, sel.best.spec.n_high);
    if let Some(path) = &a.table {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        write_selection_csv(&sel.rows, BufWriter::new(file))?;
    }
    let singleton = a.classes.is_single() && a.group_classes.is_single();
    if !singleton {
        emit(stdout, &render_selection(&sel.rows, !a.simultaneous, chosen))?;
    }
    // the chosen numbers of classes, estimated as if requested directly
    let spec = spec_for(m, chosen.0, chosen.1)?;
    let result = fit(&data, &spec, &opts)?;
    let call = if singleton {
        call_string("fit", m, &chosen.0.to_string(), &chosen.1.to_string(), &[])
    } else {
        let mut extra = Vec::new();
        if a.simultaneous {
            extra.push("--simultaneous".to_string());
        }
        call_string("select", m, &a.classes.to_string(), &a.group_classes.to_string(), &extra)
    };
    finish_fit(&result, call, m, verbose, stdout)
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let doc = FitDocument::read(&a.fit)?;
    let svg = render_svg(
        &doc,
        &PlotOptions {
            horiz: a.horiz,
            clab: a.clab.clone(),
        },
    )?;
    std::fs::write(&a.out, svg).map_err(|e| CliError::io(&a.out, e))
}

fn latent_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.latent.csv"))
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    if a.groups == 0 || a.group_size == 0 {
        return Err(CliError::Usage("--groups and --group-size must be positive".into()));
    }
    let text = std::fs::read_to_string(&a.truth).map_err(|e| CliError::io(&a.truth, e))?;
    let truth: TrueModel = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: a.truth.display().to_string(),
        source,
    })?;
    let sim = mlca_core::generate(&truth, &vec![a.group_size; a.groups], a.seed)?;
    let file = File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    sim.write_csv(BufWriter::new(file))?;
    let latent = a.latent.clone().unwrap_or_else(|| latent_path(&a.out));
    let file = File::create(&latent).map_err(|e| CliError::io(&latent, e))?;
    sim.write_latent_csv(BufWriter::new(file))?;
    emit(
        stdout,
        &format!(
            "wrote {} rows to {} and true classes to {}\n",
            sim.latent.len(),
            a.out.display(),
            latent.display()
        ),
    )
}

fn cmd_summary(a: &SummaryArgs, stdout: &mut dyn Write) -> Result<()> {
    let doc = FitDocument::read(&a.fit)?;
    emit(stdout, &render_fit(&doc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name() {
        assert_eq!(latent_path(Path::new("/tmp/sim.csv")), PathBuf::from("/tmp/sim.latent.csv"));
    }
}
