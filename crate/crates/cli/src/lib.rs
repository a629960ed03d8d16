//! Command-line front end for the reconstruction pipeline.
//!
//! `pigan simulate` writes a phantom dataset, `pretrain` / `finetune` train
//! checkpoints, `reconstruct` exports PGM images, `evaluate` scores them and
//! `recipe` runs a whole transfer experiment from a JSON file.

pub mod args;
pub mod commands;
pub mod error;
pub mod recipe;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};
pub use recipe::{ExperimentRecipe, RecipeOutcome, Scenario};

/// Execute one parsed command, printing a short summary on stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let m = commands::simulate(&a)?;
            println!(
                "{}: {} train / {} val / {} test, {}x{}, {} coils -> {}",
                m.domain,
                m.counts.train,
                m.counts.val,
                m.counts.test,
                m.height,
                m.width,
                m.coils,
                a.out.display()
            );
        }
        Command::Pretrain(a) => print_training(&commands::pretrain(&a)?, &a.out),
        Command::Finetune(a) => print_training(&commands::finetune_cmd(&a)?, &a.out),
        Command::Reconstruct(a) => {
            let m = commands::reconstruct(&a)?;
            println!(
                "{}: {} images -> {}",
                m.method,
                m.indices.len(),
                a.out.display()
            );
        }
        Command::Evaluate(a) => {
            let e = commands::evaluate(&a)?;
            for m in &e.methods {
                println!(
                    "{} ({}): PSNR {:.3} ± {:.3}, SSIM {:.4}, NRMSE {:.4}",
                    m.method,
                    m.dir,
                    m.report.psnr.mean,
                    m.report.psnr.std,
                    m.report.ssim.mean,
                    m.report.nrmse.mean
                );
            }
            if let Some(p) = &e.p_values {
                for (k, v) in p {
                    println!("paired {k}: p = {v:.4e}");
                }
            }
        }
        Command::Recipe(a) => {
            let recipe = ExperimentRecipe::load(&a.recipe)?;
            let outcome = recipe::run(&recipe, &a.out)?;
            print!("{}", outcome.comparison_csv());
        }
    }
    Ok(())
}

fn print_training(s: &commands::TrainSummary, out: &std::path::Path) {
    match (s.best_epoch, s.best_val_psnr) {
        (Some(e), Some(p)) => println!(
            "{}: best epoch {e}, val PSNR {p:.3} dB -> {}",
            s.command,
            out.display()
        ),
        _ => println!(
            "{}: {} epochs -> {}",
            s.command,
            s.epochs.len(),
            out.display()
        ),
    }
}
