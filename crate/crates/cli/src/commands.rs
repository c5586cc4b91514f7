use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use arhmm::dataset::load_csv;
use arhmm::labeling::{air_quality_weights, label_g1, label_g2, mean_table, AIR_QUALITY_KAPPA};
use arhmm::lags::pacf_report;
use arhmm::persist::{load_model, save_model};
use arhmm::structure::{export_dot, penalized_objective, report_bic};
use arhmm::synth::{parse_blocks, sample, scenario_1, scenario_2, test_blocks};
use arhmm::{count_parameters, fit_sem, loglikelihood, viterbi, Dataset, EmConfig, Error, MaxLagPolicy, Model, SemConfig};
use log::{info, warn};

use crate::{Command, DataArgs, LabelArgs};

/// Bad flags or flag combinations found after parsing.
#[derive(Debug)]
struct Usage(String);

/// A run that finished but hit non-finite values on the way.
#[derive(Debug)]
struct Numerical(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}
impl std::error::Error for Numerical {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// 1 usage, 2 data, 3 numerical.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    if err.downcast_ref::<Numerical>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_)) => 1,
        Some(
            Error::DecodingFailure { .. }
            | Error::Solver { .. }
            | Error::SingularToeplitz { .. }
            | Error::UnitRoot { .. },
        ) => 3,
        _ => 2,
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            data,
            states,
            mode,
            max_lag,
            kmax,
            alpha,
            tol,
            max_iter,
            max_rounds,
            restarts,
            seed,
            out,
            trace,
        } => {
            if states == 0 {
                return Err(usage("--states must be at least 1"));
            }
            let max_lag = match max_lag.as_str() {
                "auto" => MaxLagPolicy::Auto { kmax, alpha },
                k => MaxLagPolicy::Fixed(
                    k.parse()
                        .map_err(|_| usage(format!("--max-lag must be 'auto' or a number, got '{k}'")))?,
                ),
            };
            let config = SemConfig {
                n_states: states,
                mode: mode.parse()?,
                max_lag,
                em: EmConfig {
                    rel_tol: tol,
                    max_iter,
                },
                tol,
                max_rounds,
                restarts,
                seed,
            };
            train(&read_data(&data)?, &config, &out, trace.as_deref())
        }
        Command::Decode {
            model,
            data,
            out,
            with_labels,
            label,
        } => decode(&load_model(&model)?, &read_data(&data)?, out.as_deref(), with_labels.then_some(&label)),
        Command::Score { model, data } => score(&load_model(&model)?, &read_data(&data)?),
        Command::Label { model, label } => print_labels(&load_model(&model)?, &label),
        Command::Lags { data, kmax, alpha } => lags(&read_data(&data)?, kmax, alpha),
        Command::Generate {
            scenario,
            blocks,
            test,
            seed,
            burn_in,
            out,
        } => generate(scenario, blocks.as_deref(), test, seed, burn_in, &out),
        Command::ExportDot { model, out_dir } => dot(&load_model(&model)?, &out_dir),
    }
}

fn read_data(args: &DataArgs) -> Result<Dataset> {
    let tokens: Vec<&str> = args.missing.iter().map(String::as_str).collect();
    let raw = load_csv(&args.data, &tokens).with_context(|| format!("reading {}", args.data.display()))?;
    let missing = raw.missing_count();
    if missing > 0 {
        warn!("{missing} missing cells imputed from the previous {} values", args.impute_window);
        Ok(raw.impute_missing(args.impute_window)?)
    } else {
        Ok(raw.into_complete()?)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn train(data: &Dataset, config: &SemConfig, out: &Path, trace: Option<&Path>) -> Result<()> {
    let (model, report) = fit_sem(config, data)?;
    save_model(&model, out)?;
    if let Some(path) = trace {
        let mut w = output(Some(path))?;
        writeln!(w, "iter,loglik")?;
        if let Some(em) = report.em_reports.last() {
            for (k, ll) in em.ll_trace.iter().enumerate() {
                writeln!(w, "{k},{ll}")?;
            }
        }
        w.flush()?;
    }
    println!("max_lag {}", model.max_lag);
    println!("loglik {}", loglikelihood(&model, data)?);
    println!("objective {}", report.final_objective());
    println!("bic {}", report_bic(&model, data)?);
    println!("parameters {}", count_parameters(&model));
    println!("rounds {}", report.moves.len());
    match report.restart {
        Some(r) => println!("start restart {r}"),
        None => println!("start standard"),
    }
    if let Some(msg) = report.em_reports.iter().find_map(|r| r.aborted.as_deref()) {
        return Err(Numerical(format!("EM stopped early ({msg}); last finite model saved to {}", out.display())).into());
    }
    Ok(())
}

fn labels(model: &Model, args: &LabelArgs) -> Result<Vec<f64>> {
    let m = model.n_vars;
    let (v, kappa) = if args.air_quality {
        if m != 6 {
            return Err(usage(format!("--air-quality needs 6 variables, the model has {m}")));
        }
        (air_quality_weights().to_vec(), AIR_QUALITY_KAPPA.to_vec())
    } else {
        (
            args.v.clone().unwrap_or_else(|| vec![1.0; m]),
            args.kappa.clone().unwrap_or_else(|| vec![0.0; m]),
        )
    };
    if v.len() != m || kappa.len() != m {
        return Err(usage(format!(
            "--v and --kappa need {m} values each, got {} and {}",
            v.len(),
            kappa.len()
        )));
    }
    Ok(if args.g == 1 {
        label_g1(model, &v, &kappa)?
    } else {
        label_g2(model, &v, &kappa)?
    })
}

fn decode(model: &Model, data: &Dataset, out: Option<&Path>, label: Option<&LabelArgs>) -> Result<()> {
    let path = viterbi(model, data)?;
    let g = label.map(|l| labels(model, l)).transpose()?;
    let mut w = output(out)?;
    writeln!(w, "{}", if g.is_some() { "t,state,g" } else { "t,state" })?;
    for (k, &s) in path.states.iter().enumerate() {
        let t = model.max_lag + k;
        match &g {
            Some(g) => writeln!(w, "{t},{},{}", s + 1, g[s])?,
            None => writeln!(w, "{t},{}", s + 1)?,
        }
    }
    w.flush()?;
    Ok(())
}

fn score(model: &Model, data: &Dataset) -> Result<()> {
    println!("loglik {}", loglikelihood(model, data)?);
    println!("bic {}", report_bic(model, data)?);
    println!("objective {}", penalized_objective(model, data)?);
    println!("parameters {}", count_parameters(model));
    println!("t_eff {}", model.effective_len(data)?);
    Ok(())
}

fn print_labels(model: &Model, args: &LabelArgs) -> Result<()> {
    let g = labels(model, args)?;
    let nu = mean_table(model)?;
    let mut header = String::from("state,g");
    for m in 1..=model.n_vars {
        let _ = write!(header, ",nu_X{m}");
    }
    println!("{header}");
    for (i, row) in nu.iter().enumerate() {
        let mut line = format!("{},{}", i + 1, g[i]);
        for v in row {
            let _ = write!(line, ",{v}");
        }
        println!("{line}");
    }
    Ok(())
}

fn lags(data: &Dataset, kmax: usize, alpha: f64) -> Result<()> {
    if kmax == 0 {
        return Err(usage("--kmax must be at least 1"));
    }
    let mut p_star = 0;
    for (m, name) in data.names().iter().enumerate() {
        let report = pacf_report(&data.column(m), kmax, alpha).with_context(|| format!("column {name}"))?;
        println!("variable {name}: critical {}, order {}", report.critical, report.order);
        println!("k,rho,phi,significant");
        for k in 1..=kmax {
            let sig = if report.is_significant(k) { "yes" } else { "no" };
            println!("{k},{},{},{sig}", report.rho[k - 1], report.phi_kk[k - 1]);
        }
        println!();
        p_star = p_star.max(report.order);
    }
    println!("max_lag {p_star}");
    Ok(())
}

fn states_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.states.csv"))
}

fn generate(scenario: u8, blocks: Option<&str>, test: Option<u8>, seed: u64, burn_in: usize, out: &Path) -> Result<()> {
    let mut spec = if scenario == 1 { scenario_1() } else { scenario_2() };
    if let Some(text) = blocks {
        spec = spec.with_blocks(parse_blocks(text)?);
    } else if let Some(k) = test {
        spec = spec.with_blocks(test_blocks(usize::from(k))?);
    }
    spec = spec.with_seed(seed);
    spec.burn_in = burn_in;
    let (data, path) = sample(&spec)?;
    data.save_csv(out)?;
    let sidecar = states_path(out);
    let mut w = output(Some(&sidecar))?;
    writeln!(w, "t,state")?;
    for (t, s) in path.iter().enumerate() {
        writeln!(w, "{t},{}", s + 1)?;
    }
    w.flush()?;
    info!("wrote {} rows to {} and {}", data.n_rows(), out.display(), sidecar.display());
    Ok(())
}

fn dot(model: &Model, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    for i in 0..model.n_states {
        let path = out_dir.join(format!("state_{}.dot", i + 1));
        fs::write(&path, export_dot(model, i))?;
        println!("{}", path.display());
    }
    Ok(())
}
