use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;
use msfs_core::graph::{
    build_graph, read_coordinate_list, write_coordinate_list, NeighborhoodGraph, WalkConfig,
};
use msfs_core::solver::{FitContext, SelectionResult, SolverParams};
use msfs_core::{derive_seed, stats, Dataset};
use serde::Deserialize;

use crate::bench;
use crate::cli::{
    Cli, Command, CommonArgs, DataArgs, EvalArgs, GraphArgs, ProtocolArgs, SelectArgs, StatsArgs,
};
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};
use crate::input::{prepare, resolve_split, PrepareOptions, Prepared};
use crate::pipeline::evaluate_subset;

/// Parse `args` and run the subcommand. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = err.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Stats(a) => cmd_stats(&a, stdout),
        Command::Graph(a) => cmd_graph(&a, stdout, stderr),
        Command::Select(a) => cmd_select(&a, stdout),
        Command::Eval(a) => cmd_eval(&a, stdout),
        Command::Bench(a) => bench::cmd_bench(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let _ = writeln!(stderr, "error: {err}");
            err.code
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::write_failed(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::write_failed(path, e))
}

/// Write to `<out>/<name>` when an output directory is set, else to stdout.
fn emit(common: &CommonArgs, name: &str, bytes: &[u8], stdout: &mut dyn Write) -> CliResult<()> {
    match &common.out {
        Some(dir) => write_file(&dir.join(name), bytes),
        None => stdout
            .write_all(bytes)
            .map_err(|e| CliError::io(format!("cannot write to stdout: {e}"))),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serializes");
    bytes.push(b'\n');
    bytes
}

fn load_prepared(data: &DataArgs, protocol: &ProtocolArgs, seed: u64) -> CliResult<Prepared> {
    let (full, file_train_rows) = data.source().load()?;
    let counts = protocol.train.zip(protocol.test);
    let split = resolve_split(
        counts,
        protocol.split_mode.into(),
        derive_seed(seed, "split", &[0]),
        &full,
        file_train_rows,
    )?;
    prepare(
        &full,
        &PrepareOptions {
            split,
            noise_ratio: protocol.noise,
            noise_seed: derive_seed(seed, "noise", &[0]),
            standardize: protocol.standardize,
        },
    )
}

fn cmd_stats(a: &StatsArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (ds, _) = a.data.source().load()?;
    emit(&a.common, "stats.json", &to_json(&stats(&ds)), stdout)
}

fn sample_graph(
    train: &Dataset,
    walk: &crate::cli::WalkArgs,
    seed: u64,
) -> CliResult<(NeighborhoodGraph, msfs_core::GraphDiagnostics)> {
    let cfg = WalkConfig {
        steps: walk.steps,
        mode: walk.mode.into(),
        seed: derive_seed(seed, "walk", &[0]),
    };
    Ok(build_graph(
        train.features(),
        train.labels(),
        walk.sigma_rule(),
        &cfg,
    )?)
}

fn cmd_graph(a: &GraphArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let prepared = load_prepared(&a.data, &a.protocol, a.common.seed)?;
    let (graph, diagnostics) = sample_graph(&prepared.train, &a.walk, a.common.seed)?;
    let mut dump = Vec::new();
    write_coordinate_list(&graph.s, &mut dump).expect("writing to memory");
    let diag = to_json(&diagnostics);
    match &a.common.out {
        Some(dir) => {
            write_file(&dir.join("graph.tsv"), &dump)?;
            write_file(&dir.join("diagnostics.json"), &diag)
        }
        None => {
            stdout
                .write_all(&dump)
                .map_err(|e| CliError::io(format!("cannot write to stdout: {e}")))?;
            stderr
                .write_all(&diag)
                .map_err(|e| CliError::io(format!("cannot write to stderr: {e}")))
        }
    }
}

fn read_graph(path: &Path, n: usize) -> CliResult<NeighborhoodGraph> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let s = read_coordinate_list(BufReader::new(file), n)?;
    Ok(NeighborhoodGraph::from_similarity(s)?)
}

fn cmd_select(a: &SelectArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let params = SolverParams::new(a.alpha, a.beta, a.rho)
        .with_max_iters(a.max_iters)
        .with_tol(a.tol);
    params.validate()?;
    let prepared = load_prepared(&a.data, &a.protocol, a.common.seed)?;
    let train = &prepared.train;
    if a.count == 0 || a.count > train.n_features() {
        return Err(CliError::usage(format!(
            "-l must lie in 1..={}, got {}",
            train.n_features(),
            a.count
        )));
    }
    let graph = match &a.graph {
        Some(path) => read_graph(path, train.n_instances())?,
        None => sample_graph(train, &a.walk, a.common.seed)?.0,
    };
    let y = train.labels_f64();
    let state = FitContext::new(train.features(), &y, &graph.laplacian)?.fit(&params)?;
    let result = SelectionResult::from_state(&state, &params, a.count)?;
    emit(&a.common, "selection.json", &to_json(&result), stdout)
}

#[derive(Deserialize)]
struct SelectionFile {
    selected_indices: Vec<usize>,
}

fn read_selection(path: &Path, p: usize) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let sel: SelectionFile = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: not a selection file: {e}", path.display())))?;
    if sel.selected_indices.is_empty() {
        return Err(CliError::usage("selection is empty"));
    }
    let mut seen = HashSet::new();
    for &i in &sel.selected_indices {
        if i >= p {
            return Err(CliError::usage(format!(
                "selected index {i} out of range for {p} features"
            )));
        }
        if !seen.insert(i) {
            return Err(CliError::usage(format!("selected index {i} appears twice")));
        }
    }
    Ok(sel.selected_indices)
}

fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let prepared = load_prepared(&a.data, &a.protocol, a.common.seed)?;
    let Some(test) = &prepared.test else {
        return Err(CliError::usage(
            "eval needs a test split: pass --train/--test or --test-data",
        ));
    };
    let indices = read_selection(&a.selection, prepared.train.n_features())?;
    let (report, prediction) =
        evaluate_subset(&prepared.train, test, &indices, a.neighbors, a.smooth)?;
    if let Some(path) = &a.predictions {
        let mut buf = Vec::new();
        prediction.write_scores_csv(test.label_names(), &mut buf)?;
        write_file(path, &buf)?;
    }
    emit(&a.common, "report.json", &to_json(&report), stdout)
}
