//! Command-line front end: experiment sweeps, single-run transcripts,
//! offline decoding, frontier extraction, and transcript verification.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use qnc_core::{
    assemble_measurements, decode_transcript, emit_csv, generate_coefficients,
    generate_random_network, generate_sparse_messages, optimize_block_length, parse_csv,
    quantizers_for_graph, run_experiment, run_qnc, ExperimentConfig, RunTranscript,
};

#[derive(Parser)]
#[command(name = "qnc", about = "Quantized network coding data-gathering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a config file and emit a CSV.
    Run {
        /// Flat key-value config file.
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path; overrides the config's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce a sweep CSV to its per-scheme SNR-delay Pareto frontier.
    Frontier {
        /// Input CSV produced by `run`.
        input: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one quantized run and write its transcript.
    Simulate {
        #[arg(long, default_value_t = 20)]
        nodes: usize,
        #[arg(long, default_value_t = 60)]
        edges: usize,
        /// Sparsity k of the coefficient vector.
        #[arg(long, default_value_t = 2)]
        sparsity: usize,
        #[arg(long, default_value_t = 4)]
        block_length: u32,
        #[arg(long, default_value_t = 1.0)]
        q_max: f64,
        /// Decode time; measurements cover 2..=t.
        #[arg(long, default_value_t = 8)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        capacity: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Transcript output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a stored transcript and print the report.
    Decode {
        transcript: PathBuf,
    },
    /// Run the invariant suite on a stored transcript.
    Verify {
        transcript: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .context("no output path: pass --out or set `output` in the config")?;
            let result = run_experiment(&cfg)?;
            emit_csv(&result, &out)?;
            eprintln!(
                "wrote {} rows to {} ({} decode failures excluded)",
                result.rows.len(),
                out.display(),
                result.failures.len()
            );
            for f in &result.failures {
                eprintln!(
                    "  excluded: edges={} k/n={} L={} realization={} t={}: {}",
                    f.edges, f.k_over_n, f.block_length, f.realization, f.t, f.message
                );
            }
        }
        Command::Frontier { input, out } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let results = parse_csv(&text)?;
            let frontier = optimize_block_length(&results)?;
            emit_csv(&frontier, &out)?;
            eprintln!("wrote {} frontier rows to {}", frontier.rows.len(), out.display());
        }
        Command::Simulate {
            nodes,
            edges,
            sparsity,
            block_length,
            q_max,
            t,
            capacity,
            seed,
            out,
        } => {
            let g = generate_random_network(nodes, edges, capacity, seed)?;
            let ens = generate_sparse_messages(nodes, sparsity, q_max, seed)?;
            let sched = generate_coefficients(&g, t, seed)?;
            let quantizers = quantizers_for_graph(&g, block_length, q_max)?;
            let run = run_qnc(&g, &sched, &quantizers, &ens.x, t)?;
            let record = assemble_measurements(&run, &g, &sched, &quantizers, t)?;
            let transcript = RunTranscript::from_run(&g, &ens, &run, &record, block_length);
            std::fs::write(&out, transcript.to_text())?;
            eprintln!(
                "wrote transcript: {} nodes, {} edges, {} measurements, to {}",
                nodes,
                edges,
                record.m(),
                out.display()
            );
        }
        Command::Decode { transcript } => {
            let text = std::fs::read_to_string(&transcript)
                .with_context(|| format!("reading {}", transcript.display()))?;
            let tr = RunTranscript::from_text(&text)?;
            let report = decode_transcript(&tr)?;
            println!("{report}");
        }
        Command::Verify { transcript } => {
            let text = std::fs::read_to_string(&transcript)
                .with_context(|| format!("reading {}", transcript.display()))?;
            let tr = RunTranscript::from_text(&text)?;
            let report = tr.verify();
            println!("{report}");
            if !report.all_passed() {
                bail!("transcript failed verification");
            }
        }
    }
    Ok(())
}
