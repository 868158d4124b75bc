//! End-to-end experiment recipes. Each trains (or loads) its fixture
//! models, generates (or loads) a test set and writes CSV tables.
//!
//! Fixture models train with seed `--seed + 1` and test sets are drawn with
//! seed `--seed + 2`, so the default run uses the acceptance suite's setup.

use wam_core::attribution::{IgConfig, MethodConfig};
use wam_core::datasets::{generate, Dataset, DatasetSpec, Generator};
use wam_core::experiments::{
    fig4_scales, fig6_pareto, max_pairwise_gap, noise_audio, overlap_audio, score_table_csv, table1_desk,
    train_fixture, wavelet_invariance, FixtureConfig, PARETO_ALPHAS, PARETO_STEPS,
};
use wam_core::model::{accuracy, BuiltinModel};
use wam_core::sanity::cascading_randomization;
use wam_core::{Modality, Signal, WamError};

use crate::args::{Cli, RecipeArgs, RecipeName};
use crate::backend;
use crate::commands::{read_data, write_json, write_text};

/// Default mask learning rate of the Pareto recipe.
const PARETO_LR: f64 = 0.05;
/// Kept coefficient share in the audio recipes.
const KEEP: f64 = 0.1;

struct Setup<'a> {
    cli: &'a Cli,
    args: &'a RecipeArgs,
}

impl Setup<'_> {
    fn train_seed(&self) -> u64 {
        self.cli.seed.wrapping_add(1)
    }

    fn test_seed(&self) -> u64 {
        self.cli.seed.wrapping_add(2)
    }

    /// Loads `--model`, or trains the fixture described by `cfg` and saves
    /// it under `models/<name>.json`.
    fn model(&self, name: &str, cfg: FixtureConfig) -> anyhow::Result<BuiltinModel> {
        if let Some(path) = &self.args.model {
            return Ok(backend::load_builtin(path)?);
        }
        let (model, report) = train_fixture(&cfg)?;
        let dir = self.cli.out.join("models");
        std::fs::create_dir_all(&dir)?;
        model.save(&dir.join(format!("{name}.json")))?;
        write_json(&dir.join(format!("{name}_train_report.json")), &report)?;
        eprintln!("trained {name}: training accuracy {:.3}", report.train_accuracy);
        Ok(model)
    }

    /// Loads `--data`, or generates `per_class` test samples per class.
    fn test_set(&self, generator: Generator, per_class: usize) -> anyhow::Result<Dataset> {
        let mut ds = match &self.args.data {
            Some(dir) => read_data(dir)?,
            None => generate(&DatasetSpec::new(generator, per_class, self.test_seed()))?,
        };
        if let Some(n) = self.args.samples {
            ds.samples.truncate(n);
            ds.labels.truncate(n);
            if let Some(b) = ds.boxes.as_mut() {
                b.truncate(n);
            }
        }
        if ds.is_empty() {
            return Err(WamError::EmptyDataset.into());
        }
        Ok(ds)
    }

    fn report_accuracy(&self, model: &BuiltinModel, ds: &Dataset) -> anyhow::Result<f64> {
        let acc = accuracy(model, &ds.samples, &ds.labels)?;
        eprintln!("test accuracy {acc:.3} on {} samples", ds.len());
        Ok(acc)
    }

    fn write(&self, file: &str, text: &str) -> anyhow::Result<()> {
        write_text(&self.cli.out.join(file), text)
    }
}

fn first(samples: &[Signal], n: usize) -> &[Signal] {
    &samples[..n.min(samples.len())]
}

pub fn run(cli: &Cli, args: &RecipeArgs) -> anyhow::Result<()> {
    let s = Setup { cli, args };
    let shapes = Generator::TexturedShapes2d;
    let image = cli.spec_for(Modality::Image);
    match args.name {
        RecipeName::Table1Desk => {
            let model = s.model("shapes", FixtureConfig::new(shapes, args.per_class, s.train_seed()))?;
            let test = s.test_set(shapes, 50)?;
            s.report_accuracy(&model, &test)?;
            let rows = table1_desk(&model, &test.samples, &image, args.steps, cli.seed)?;
            s.write("table1.csv", &score_table_csv(&rows))
        }
        RecipeName::WaveletInvariance => {
            let model = s.model("shapes", FixtureConfig::new(shapes, args.per_class, s.train_seed()))?;
            let test = s.test_set(shapes, 50)?;
            let rows = wavelet_invariance(&model, &test.samples, image.levels, &IgConfig::default(), args.steps)?;
            let (ins, del) = max_pairwise_gap(&rows);
            eprintln!("largest pairwise gap: insertion {ins:.4}, deletion {del:.4}");
            s.write("wavelet_invariance.csv", &score_table_csv(&rows))
        }
        RecipeName::Fig4Scales => {
            let normal = s.model("shapes", FixtureConfig::new(shapes, args.per_class, s.train_seed()))?;
            let blurred = train_fixture(&FixtureConfig::blur_augmented(shapes, args.per_class, s.train_seed()))?.0;
            std::fs::create_dir_all(cli.out.join("models"))?;
            blurred.save(&cli.out.join("models").join("shapes_blur.json"))?;
            let test = s.test_set(shapes, 50)?;
            let cmp = fig4_scales(&normal, &blurred, &test.samples, &image, &MethodConfig::Ig(IgConfig::default()))?;
            eprintln!("coarse-share margin (blur − normal) {:+.4}", cmp.coarse_margin());
            s.write("fig4_scales.csv", &cmp.to_csv())
        }
        RecipeName::FigBRandomization => {
            let model = s.model("shapes", FixtureConfig::new(shapes, args.per_class, s.train_seed()))?;
            let test = s.test_set(shapes, 25)?;
            let method = MethodConfig::default_for(args.method);
            let curve = cascading_randomization(&model, first(&test.samples, 50), &method, &image, cli.seed)?;
            s.write("randomization.csv", &curve.to_csv())
        }
        RecipeName::Fig6Pareto => {
            let model = s.model("shapes", FixtureConfig::new(shapes, args.per_class, s.train_seed()))?;
            let test = s.test_set(shapes, 25)?;
            let r = fig6_pareto(
                &model,
                first(&test.samples, 50),
                &image,
                &PARETO_ALPHAS,
                PARETO_STEPS,
                PARETO_LR,
                0.8,
            )?;
            s.write("pareto.csv", &r.to_csv())?;
            s.write("pareto_samples.csv", &r.samples_csv())
        }
        RecipeName::NoiseAudio => {
            let audio = Generator::ToneBurst1d;
            let model = s.model("audio_noise", FixtureConfig::noise_augmented(audio, args.per_class, s.train_seed()))?;
            let test = s.test_set(audio, 50)?;
            s.report_accuracy(&model, &test)?;
            let spec = cli.spec_for(Modality::Audio);
            let r = noise_audio(&model, &test.samples, &spec, &MethodConfig::Ig(IgConfig::default()), KEEP, cli.seed.wrapping_add(5))?;
            eprintln!(
                "argmax unchanged {:.3}, class logit raised {:.3}",
                r.unchanged_fraction(),
                r.raised_fraction()
            );
            s.write("noise_audio.csv", &r.to_csv())
        }
        RecipeName::OverlapAudio => {
            let audio = Generator::ToneBurst1d;
            let model = s.model("audio_noise", FixtureConfig::noise_augmented(audio, args.per_class, s.train_seed()))?;
            let test = s.test_set(audio, 50)?;
            // label 1 clips carry the burst; label 0 clips are plain tones
            let pick = |label: usize| -> Vec<Signal> {
                test.samples
                    .iter()
                    .zip(&test.labels)
                    .filter(|(_, &l)| l == label)
                    .map(|(x, _)| x.clone())
                    .collect()
            };
            let (targets, others) = (pick(1), pick(0));
            let spec = cli.spec_for(Modality::Audio);
            let rows = overlap_audio(&model, &targets, &others, 1, &spec, &MethodConfig::Ig(IgConfig::default()), KEEP)?;
            let mut out = String::from("sample,target_correlation,other_correlation\n");
            for r in &rows {
                out.push_str(&format!("{},{},{}\n", r.sample, r.target_correlation, r.other_correlation));
            }
            s.write("overlap_audio.csv", &out)
        }
    }
}

