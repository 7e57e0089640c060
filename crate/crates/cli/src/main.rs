use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use objguide_cli::commands::*;
use objguide_cli::formats::{read_text, write_columns, write_rectifiers, write_text, write_vps};
use objguide_cli::CliResult;

#[derive(Parser)]
#[command(name = "objguide", version, about = "Object-guided feature matching for image pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match one image pair; writes matches.txt, groups.txt and report.txt.
    Match {
        image1: PathBuf,
        image2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: PipelineArgs,
    },
    /// Estimate and classify the vanishing points of one image.
    Vps {
        image: PathBuf,
        /// Output file [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        params: PipelineArgs,
    },
    /// Build per-plane rectifiers; writes rectifiers.txt and columns.txt.
    Rectify {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: PipelineArgs,
    },
    /// Generate a synthetic image pair with its ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Score a match result against synthetic ground truth.
    Eval {
        truth: PathBuf,
        image1: PathBuf,
        image2: PathBuf,
        /// Directory holding matches.txt and groups.txt.
        result: PathBuf,
        /// Reprojection tolerance for a correct match, pixels.
        #[arg(long, default_value_t = 3.0)]
        tol: f64,
    },
    /// Match every pair listed in a file, one `<image1> <image2> <output>`
    /// per line.
    Batch {
        list: PathBuf,
        /// Run the pairs one after another.
        #[arg(long)]
        serial: bool,
        #[command(flatten)]
        params: PipelineArgs,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Match { image1, image2, out, params } => {
            print!("{}", cmd_match(&image1, &image2, &out, &params)?);
        }
        Command::Vps { image, out, params } => {
            let text = write_vps(&cmd_vps(&image, &params)?);
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Rectify { image, out, params } => {
            let (rects, cols) = cmd_rectify(&image, &params)?;
            std::fs::create_dir_all(&out)
                .map_err(|source| objguide_cli::CliError::Write { file: out.clone(), source })?;
            write_text(&out.join("rectifiers.txt"), &write_rectifiers(&rects))?;
            write_text(&out.join("columns.txt"), &write_columns(&cols))?;
            println!("rectifiers {}\ncolumns {}", rects.len(), cols.len());
        }
        Command::Synth { out, synth } => cmd_synth(&out, &synth)?,
        Command::Eval { truth, image1, image2, result, tol } => {
            print!("{}", format_score(&cmd_eval(&truth, &image1, &image2, &result, tol)?));
        }
        Command::Batch { list, serial, params } => {
            let jobs = parse_batch(&read_text(&list)?, &list)?;
            let mut first_err = None;
            for (job, res) in jobs.iter().zip(cmd_batch(&jobs, &params, serial)) {
                match res {
                    Ok(report) => {
                        let get = |k: &str| report.lines().find_map(|l| l.strip_prefix(k)).unwrap_or("").trim().to_string();
                        println!("{} groups {} matches {}", job.out.display(), get("groups "), get("matches "));
                    }
                    Err(e) => {
                        println!("{} error {e}", job.out.display());
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("objguide: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
