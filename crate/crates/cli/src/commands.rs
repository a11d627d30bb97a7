use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use tensorm::encode::{relational_encode, ContinuousMatrix};
use tensorm::model::FactorMatrix;
use tensorm::modelselect::{cv_select, occam_select, OccamOptions, RankSelectionReport};
use tensorm::reconstruct::posterior_predictive;
use tensorm::simulate::{density_for_target, generate, run_bench, write_bench_csv, BenchGrid, SimSpec};
use tensorm::tensor::{load_tensor, ObservedTensor, MISSING, OBSERVED_ONE, OBSERVED_ZERO};
use tensorm::{run_chain, ChainResult};

use crate::args::{
    BenchArgs, Command, EncodeArgs, FitArgs, Method, OutputArgs, RerunArgs, SelectRankArgs,
    SimulateArgs,
};
use crate::error::CliError;
use crate::output::{now_ms, write_manifest, Manifest, Staging, MANIFEST};

pub fn run(command: Command) -> Result<(), CliError> {
    let command = match command {
        Command::Rerun(args) => from_manifest(&args)?,
        other => other,
    };
    execute(resolve(command)?)
}

/// Fills in seeds and makes input paths absolute so the manifest alone
/// reproduces the run.
fn resolve(mut command: Command) -> Result<Command, CliError> {
    fn seed(s: &mut Option<u64>) {
        s.get_or_insert_with(rand::random);
    }
    fn absolute(p: &mut PathBuf) -> Result<(), CliError> {
        *p = fs::canonicalize(&*p).map_err(|e| CliError::io(p, e))?;
        Ok(())
    }
    match &mut command {
        Command::Fit(a) | Command::Complete(a) => {
            seed(&mut a.sampler.seed);
            absolute(&mut a.input)?;
        }
        Command::Simulate(a) => seed(&mut a.seed),
        Command::SelectRank(a) => {
            seed(&mut a.sampler.seed);
            absolute(&mut a.input)?;
        }
        Command::Encode(a) => absolute(&mut a.input)?,
        Command::Bench(a) => seed(&mut a.sampler.seed),
        Command::Rerun(_) => unreachable!("rerun is unwrapped first"),
    }
    Ok(command)
}

fn from_manifest(args: &RerunArgs) -> Result<Command, CliError> {
    let file = File::open(&args.manifest).map_err(|e| CliError::io(&args.manifest, e))?;
    let value: serde_json::Value =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::io(&args.manifest, e.into()))?;
    let run = serde_json::json!({ "command": value["command"], "args": value["args"] });
    let mut command: Command = serde_json::from_value(run)
        .map_err(|e| CliError::Arg(format!("{} is not a run manifest: {e}", args.manifest.display())))?;
    let out = args.output.clone();
    let threads = args.threads.clone();
    match &mut command {
        Command::Fit(a) | Command::Complete(a) => {
            a.output = out;
            a.sampler.threads = threads;
        }
        Command::SelectRank(a) => {
            a.output = out;
            a.sampler.threads = threads;
        }
        Command::Bench(a) => {
            a.output = out;
            a.sampler.threads = threads;
        }
        Command::Simulate(a) => a.output = out,
        Command::Encode(a) => a.output = out,
        Command::Rerun(_) => return Err(CliError::Arg("a manifest cannot describe a rerun".into())),
    }
    Ok(command)
}

fn execute(command: Command) -> Result<(), CliError> {
    let started = now_ms();
    let (output, threads, seed, inputs): (&OutputArgs, usize, Option<u64>, Vec<PathBuf>) = match &command {
        Command::Fit(a) | Command::Complete(a) => {
            (&a.output, a.sampler.threads.resolve(), a.sampler.seed, vec![a.input.clone()])
        }
        Command::Simulate(a) => (&a.output, 1, a.seed, vec![]),
        Command::SelectRank(a) => (&a.output, a.sampler.threads.resolve(), a.sampler.seed, vec![a.input.clone()]),
        Command::Encode(a) => (&a.output, 1, None, vec![a.input.clone()]),
        Command::Bench(a) => (&a.output, a.sampler.threads.resolve(), a.sampler.seed, vec![]),
        Command::Rerun(_) => unreachable!("rerun is unwrapped first"),
    };
    let mut staging = Staging::new(&output.out, output.force)?;
    match &command {
        Command::Fit(a) => fit(a, &mut staging, false)?,
        Command::Complete(a) => fit(a, &mut staging, true)?,
        Command::Simulate(a) => simulate(a, &mut staging)?,
        Command::SelectRank(a) => select_rank(a, &mut staging)?,
        Command::Encode(a) => encode(a, &mut staging)?,
        Command::Bench(a) => bench(a, &mut staging)?,
        Command::Rerun(_) => unreachable!("rerun is unwrapped first"),
    }
    let mut outputs = staging.files().to_vec();
    outputs.push(MANIFEST.to_string());
    let manifest = Manifest {
        tool: "tensorm",
        version: env!("CARGO_PKG_VERSION"),
        run: &command,
        seed,
        threads,
        inputs,
        outputs,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    };
    write_manifest(&mut staging, &manifest)?;
    let dest = staging.commit()?;
    println!("wrote {}", dest.display());
    Ok(())
}

fn load(path: &Path) -> Result<ObservedTensor, CliError> {
    load_tensor(path).map_err(|e| CliError::at(path, e))
}

fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

fn report_chain(chain: &ChainResult) {
    if !chain.trace.converged {
        warn(format!(
            "burn-in did not converge within {} sweeps; samples were drawn anyway",
            chain.trace.burn_in_sweeps
        ));
    }
    if let Some(last) = chain.trace.last() {
        let acc = last
            .train_accuracy
            .map(|a| format!("{a:.6}"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "burn-in sweeps: {}  σ(λ): {:.6}  train accuracy: {acc}",
            chain.trace.burn_in_sweeps, last.sigma_lambda
        );
    }
}

fn write_factors(chain: &ChainResult, staging: &mut Staging) -> Result<(), CliError> {
    let acc = &chain.accumulator;
    let map = acc.map_factors()?;
    for (k, f) in map.iter().enumerate() {
        staging.write(&format!("factor_mean_mode{k}.csv"), |w| acc.write_mean_csv(k, w))?;
        staging.write(&format!("factor_map_mode{k}.csv"), |w| f.write_csv(acc.labels(), w))?;
    }
    staging.write("trace.ndjson", |w| chain.trace.write_ndjson(w))
}

fn fit(args: &FitArgs, staging: &mut Staging, complete: bool) -> Result<(), CliError> {
    let t = load(&args.input)?;
    let cfg = args.sampler.config(args.rank);
    let chain = run_chain(&t, &cfg)?;
    report_chain(&chain);
    write_factors(&chain, staging)?;
    if complete {
        write_completion(&t, &chain, staging)?;
    }
    Ok(())
}

fn write_completion(t: &ObservedTensor, chain: &ChainResult, staging: &mut Staging) -> Result<(), CliError> {
    let recon = posterior_predictive(&chain.accumulator)?;
    let missing: Vec<usize> = (0..t.len()).filter(|&o| t.entries()[o] == MISSING).collect();
    if missing.is_empty() {
        warn("tensor has no missing entries; completion.csv holds only a header");
    }
    let mut entries = t.entries().to_vec();
    for &o in &missing {
        entries[o] = if recon.hard[o] { OBSERVED_ONE } else { OBSERVED_ZERO };
    }
    let completed = ObservedTensor::new(t.dims().to_vec(), entries)?;
    staging.write("completed.btnsr", |w| completed.write_dense(w))?;
    staging.write("completion.csv", |w| {
        let header: Vec<String> = (1..=t.ndim()).map(|k| format!("i{k}")).collect();
        writeln!(w, "{},probability,value", header.join(","))?;
        for &o in &missing {
            let idx = t.index_of(o)?;
            let idx: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{},{},{}", idx.join(","), recon.probabilities[o], u8::from(recon.hard[o]))?;
        }
        Ok(())
    })?;
    println!("completed {} missing entries", missing.len());
    Ok(())
}

fn simulate(args: &SimulateArgs, staging: &mut Staging) -> Result<(), CliError> {
    let factor_density = match (args.factor_density, args.density) {
        (Some(d), _) => d,
        (None, Some(target)) => density_for_target(target, args.rank, args.dims.len())?,
        (None, None) => return Err(CliError::Arg("give --factor-density or --density".into())),
    };
    let sim = generate(&SimSpec {
        dims: args.dims.clone(),
        rank: args.rank,
        factor_density,
        noise_p: args.noise,
        seed: args.seed.expect("seed resolved"),
    })?;
    staging.write("clean.btnsr", |w| sim.clean.write_dense(w))?;
    staging.write("noisy.btnsr", |w| sim.noisy.write_dense(w))?;
    let labels: Vec<usize> = (0..args.rank).collect();
    for (k, f) in sim.truth.iter().enumerate() {
        staging.write(&format!("truth_mode{k}.csv"), |w| FactorMatrix::write_csv(f, &labels, w))?;
    }
    println!("factor density: {factor_density}");
    Ok(())
}

fn parse_ranks(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Arg(format!("cannot read ranks `{spec}`; use e.g. 2,3,4 or 2-6"));
    let mut ranks = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            ranks.extend(lo..=hi);
        } else {
            ranks.push(part.parse().map_err(|_| bad())?);
        }
    }
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(bad());
    }
    ranks.sort_unstable();
    ranks.dedup();
    Ok(ranks)
}

fn select_rank(args: &SelectRankArgs, staging: &mut Staging) -> Result<(), CliError> {
    let t = load(&args.input)?;
    let report: RankSelectionReport = match args.method {
        Method::Occam => {
            let l0 = match (args.initial_rank, args.expected_rank) {
                (Some(l0), _) => l0,
                (None, Some(expected)) => 2 * expected,
                (None, None) => {
                    return Err(CliError::Arg(
                        "occam needs --initial-rank or --expected-rank (starts at twice the expected rank)".into(),
                    ))
                }
            };
            let opts = OccamOptions {
                min_gain: args.min_gain,
                ..OccamOptions::default()
            };
            let (report, chain) = occam_select(&t, l0, &args.sampler.config(l0), &opts)?;
            write_factors(&chain, staging)?;
            report
        }
        Method::Cv => {
            let spec = args
                .ranks
                .as_deref()
                .ok_or_else(|| CliError::Arg("cross-validation needs --ranks, e.g. --ranks 2-6".into()))?;
            let ranks = parse_ranks(spec)?;
            cv_select(&t, &ranks, args.holdout, &args.sampler.config(ranks[0]))?
        }
    };
    staging.write("report.txt", |w| {
        write!(w, "{report}")?;
        Ok(())
    })?;
    staging.write("report.ndjson", |w| report.write_ndjson(w))?;
    print!("{report}");
    Ok(())
}

fn encode(args: &EncodeArgs, staging: &mut Staging) -> Result<(), CliError> {
    let file = File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let m = ContinuousMatrix::read_csv(BufReader::new(file)).map_err(|e| CliError::at(&args.input, e))?;
    let m = if args.no_normalize { m } else { m.zscore_normalize()? };
    let t = relational_encode(&m, args.epsilon)?;
    staging.write("tensor.btnsr", |w| t.write_dense(w))?;
    staging.write("names.tsv", |w| m.write_name_map(w))?;
    println!(
        "encoded {} objects × {} attributes; {} observed relations",
        m.objects(),
        m.attributes(),
        t.observed_count()
    );
    Ok(())
}

fn bench(args: &BenchArgs, staging: &mut Staging) -> Result<(), CliError> {
    if args.ranks.is_empty() || args.densities.is_empty() || args.noises.is_empty() || args.repeats == 0 {
        return Err(CliError::Arg("bench grid is empty".into()));
    }
    let grid = BenchGrid {
        dims: args.dims.clone(),
        ranks: args.ranks.clone(),
        densities: args.densities.clone(),
        noises: args.noises.clone(),
        repeats: args.repeats,
        rank_fit: args.rank_fit,
    };
    let rows = run_bench(&grid, &args.sampler.config(args.ranks[0]))?;
    staging.write("bench.csv", |w| write_bench_csv(&rows, w))?;
    println!("{} rows", rows.len());
    Ok(())
}
