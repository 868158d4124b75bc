//! One function per subcommand. Each reads its inputs, runs the library
//! call and writes files under `--out`.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde_json::json;
use wam_core::attribution::{attribute, scale_importance, Attribution, Domain, Method};
use wam_core::datasets::{generate, read_dataset, write_dataset, Augmentation, Dataset, DatasetSpec};
use wam_core::experiments::{explain_all, topology_for};
use wam_core::io::{read_pyramid_dir, read_wamf, render_heatmap, write_pyramid_dir, write_wamf, Colormap};
use wam_core::metrics::{
    faithfulness_curves, ff_spectra, fid_in_sample, metric_config, mu_fidelity, pointing_game, MetricReport,
    MuFidelityConfig,
};
use wam_core::model::{argmax, train, BuiltinModel, Classifier, TrainConfig};
use wam_core::perturbation::{optimize_mask, pareto_csv, pareto_sweep, MaskConfig, MaskMode};
use wam_core::sanity::cascading_randomization;
use wam_core::signal::{add_gaussian_noise_unclipped, rms};
use wam_core::{dwt, idwt, spatial_projection, topk_reconstruct, Signal, WamError, WaveletPyramid};

use crate::args::*;
use crate::backend;
use crate::recipes;

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::Train(a) => train_model(cli, a),
        Command::Dwt(a) => forward(cli, a),
        Command::Idwt(a) => inverse(cli, a),
        Command::Attribute(a) => attribute_one(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Perturb(a) => perturb(cli, a),
        Command::Sweep(a) => sweep(cli, a),
        Command::Sanity(a) => sanity(cli, a),
        Command::ScaleImportance(a) => scales(cli, a),
        Command::Noise(a) => noise(cli, a),
        Command::TopkReconstruct(a) => topk(cli, a),
        Command::Render(a) => render(cli, a),
        Command::Recipe(a) => recipes::run(cli, a),
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_signal(path: &Path) -> anyhow::Result<Signal> {
    if !path.exists() {
        return Err(WamError::MissingArtifact(path.display().to_string()).into());
    }
    Ok(read_wamf(path)?)
}

fn read_pyramid(dir: &Path) -> anyhow::Result<WaveletPyramid> {
    if !dir.is_dir() {
        return Err(WamError::MissingArtifact(dir.display().to_string()).into());
    }
    Ok(read_pyramid_dir(dir)?)
}

pub fn read_data(dir: &Path) -> anyhow::Result<Dataset> {
    Ok(read_dataset(dir)?)
}

fn domain(cli: &Cli, arg: DomainArg, x: &Signal) -> Domain {
    match arg {
        DomainArg::Wavelet => Domain::Wavelet(cli.spec_for(x.modality())),
        DomainArg::Pixel => Domain::Pixel,
    }
}

fn class_or_predicted<C: Classifier + ?Sized>(b: &C, x: &Signal, class: Option<usize>) -> anyhow::Result<usize> {
    Ok(match class {
        Some(c) => c,
        None => argmax(&b.logits_raw(x.data())?),
    })
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> anyhow::Result<()> {
    let augmentation = match a.augment {
        AugmentArg::None => Augmentation::None,
        AugmentArg::Blur => Augmentation::Blur { sigma: a.blur_sigma },
        AugmentArg::Noise => Augmentation::Noise,
    };
    let ds = generate(&DatasetSpec {
        augmentation,
        ..DatasetSpec::new(a.generator, a.per_class, cli.seed)
    })?;
    write_dataset(&cli.out, &ds)?;
    eprintln!("wrote {} samples of {} to {}", ds.len(), a.generator.name(), cli.out.display());
    Ok(())
}

fn train_model(cli: &Cli, a: &TrainArgs) -> anyhow::Result<()> {
    let ds = read_data(&a.data)?;
    if ds.is_empty() {
        return Err(WamError::EmptyDataset.into());
    }
    let topology = a.topology.unwrap_or_else(|| topology_for(ds.spec.generator));
    let model = BuiltinModel::new(topology, &ds.shape(), ds.num_classes(), a.activation.into(), cli.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        momentum: a.momentum,
        seed: cli.seed,
    };
    let (model, report) = train(&model, &ds.samples, &ds.labels, &cfg)?;
    model.save(&cli.out.join("model.json"))?;
    write_json(&cli.out.join("train_report.json"), &report)?;
    eprintln!("training accuracy {:.3}", report.train_accuracy);
    Ok(())
}

fn forward(cli: &Cli, a: &InputArgs) -> anyhow::Result<()> {
    let x = read_signal(&a.input)?;
    let p = dwt(&x, &cli.spec_for(x.modality()))?;
    write_pyramid_dir(&cli.out.join("pyramid"), &p, None)?;
    Ok(())
}

fn inverse(cli: &Cli, a: &InputArgs) -> anyhow::Result<()> {
    let p = read_pyramid(&a.input)?;
    write_wamf(&cli.out.join("signal.wamf"), &idwt(&p)?)?;
    Ok(())
}

fn attribute_one(cli: &Cli, a: &AttributeArgs) -> anyhow::Result<()> {
    let b = backend::open(&a.model)?;
    let x = read_signal(&a.input)?;
    let c = class_or_predicted(&b, &x, a.class)?;
    let attr = attribute(&b, &x, c, domain(cli, a.domain, &x), &a.method.config(cli.seed))?;
    let sidecar = attr.sidecar(&b.name());
    match attr.domain {
        Domain::Wavelet(_) => {
            write_pyramid_dir(&cli.out.join("attribution"), &attr.pyramid()?, Some(&sidecar))?;
            write_wamf(&cli.out.join("spatial.wamf"), &attr.spatial_map()?)?;
        }
        Domain::Pixel => {
            write_wamf(&cli.out.join("attribution.wamf"), &attr.spatial_map()?)?;
            write_json(&cli.out.join("attribution.json"), &sidecar)?;
        }
    }
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> anyhow::Result<()> {
    let b = backend::open(&a.model)?;
    let mut ds = read_data(&a.data)?;
    if ds.is_empty() {
        return Err(WamError::EmptyDataset.into());
    }
    if let Some(limit) = a.limit {
        ds.samples.truncate(limit);
        ds.labels.truncate(limit);
        if let Some(boxes) = ds.boxes.as_mut() {
            boxes.truncate(limit);
        }
    }
    let d = domain(cli, a.domain, &ds.samples[0]);
    let method = a.method.config(cli.seed);
    let attrs = explain_all(&b, &ds.samples, d, &method)?;
    let config = json!({
        "metrics": metric_config(a.steps, a.q),
        "method": method.method().name(),
        "method_config": method.snapshot(),
        "domain": d,
    });

    let mut reports = Vec::new();
    let need_curves = a
        .metrics
        .iter()
        .any(|m| matches!(m, MetricArg::Insertion | MetricArg::Deletion | MetricArg::Faithfulness));
    let curves = if need_curves {
        ds.samples
            .iter()
            .zip(&attrs)
            .map(|(x, at)| faithfulness_curves(&b, x, at, at.class, a.steps))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    for &metric in &a.metrics {
        let values: Vec<f64> = match metric {
            MetricArg::Insertion => curves.iter().map(|r| r.insertion.auc).collect(),
            MetricArg::Deletion => curves.iter().map(|r| r.deletion.auc).collect(),
            MetricArg::Faithfulness => curves.iter().map(|r| r.faithfulness()).collect(),
            MetricArg::MuFidelity => {
                let cfg = MuFidelityConfig {
                    seed: cli.seed,
                    ..Default::default()
                };
                per_sample(&ds.samples, &attrs, |x, at| mu_fidelity(&b, x, at, at.class, &cfg))?
            }
            MetricArg::Ff => per_sample(&ds.samples, &attrs, |x, at| ff_spectra(&b, x, at, at.class, a.q))?,
            MetricArg::FidIn => per_sample(&ds.samples, &attrs, |x, at| {
                fid_in_sample(&b, x, at, a.q).map(|hit| f64::from(u8::from(hit)))
            })?,
            MetricArg::Pointing => {
                let boxes = ds
                    .boxes
                    .as_ref()
                    .ok_or_else(|| WamError::MissingArtifact("dataset has no target boxes".into()))?;
                attrs
                    .iter()
                    .zip(boxes)
                    .map(|(at, bx)| pointing_game(at, bx).map(|hit| f64::from(u8::from(hit))))
                    .collect::<Result<_, _>>()?
            }
        };
        reports.push(MetricReport::for_metric(metric.name(), values, config.clone()));
    }

    let mut summary = String::from("metric,aggregation,value,count\n");
    for r in &reports {
        let agg = serde_json::to_value(r.aggregation)?;
        summary.push_str(&format!("{},{},{},{}\n", r.metric, agg.as_str().unwrap_or(""), r.aggregate, r.count));
        eprintln!("{} = {:.4}", r.metric, r.aggregate);
    }
    write_text(&cli.out.join("metrics.csv"), &summary)?;
    let mut rows = String::from("sample");
    for r in &reports {
        rows.push(',');
        rows.push_str(&r.metric);
    }
    rows.push('\n');
    for i in 0..ds.samples.len() {
        rows.push_str(&i.to_string());
        for r in &reports {
            rows.push_str(&format!(",{}", r.per_sample[i]));
        }
        rows.push('\n');
    }
    write_text(&cli.out.join("per_sample.csv"), &rows)?;
    write_json(&cli.out.join("metrics.json"), &reports)
}

fn per_sample(
    samples: &[Signal],
    attrs: &[Attribution],
    f: impl Fn(&Signal, &Attribution) -> wam_core::Result<f64>,
) -> anyhow::Result<Vec<f64>> {
    Ok(samples.iter().zip(attrs).map(|(x, at)| f(x, at)).collect::<Result<_, _>>()?)
}

fn perturb(cli: &Cli, a: &PerturbArgs) -> anyhow::Result<()> {
    let b = backend::open(&a.model)?;
    let x = read_signal(&a.input)?;
    let spec = cli.spec_for(x.modality());
    let cfg = MaskConfig {
        steps: a.steps,
        learning_rate: a.lr,
        mode: match a.mode {
            MaskModeArg::Preservation => MaskMode::Preservation,
            MaskModeArg::Deletion => MaskMode::Deletion,
        },
        ..MaskConfig::new(a.alpha, class_or_predicted(&b, &x, a.class)?)
    };
    let r = optimize_mask(&b, &x, &spec, &cfg)?;
    let mask = WaveletPyramid::from_flat(spec, x.shape(), &r.mask)?;
    write_pyramid_dir(&cli.out.join("mask"), &mask, None)?;
    write_wamf(&cli.out.join("minimal.wamf"), &r.minimal_signal)?;
    let mut trace = String::from("step,logit,l1,sparsity,loss\n");
    for t in &r.trace {
        trace.push_str(&format!("{},{},{},{},{}\n", t.step, t.logit, t.l1, t.sparsity, t.loss));
    }
    write_text(&cli.out.join("trace.csv"), &trace)?;
    eprintln!("mask sparsity {:.3}", r.sparsity());
    Ok(())
}

fn sweep(cli: &Cli, a: &SweepArgs) -> anyhow::Result<()> {
    let b = backend::open(&a.model)?;
    let x = read_signal(&a.input)?;
    let rows = pareto_sweep(&b, &x, &cli.spec_for(x.modality()), &a.alphas, a.steps)?;
    write_text(&cli.out.join("pareto.csv"), &pareto_csv(&rows))
}

fn sanity(cli: &Cli, a: &SanityArgs) -> anyhow::Result<()> {
    let model = backend::load_builtin(&a.model)?;
    let ds = read_data(&a.data)?;
    let samples = &ds.samples[..a.limit.min(ds.len())];
    let spec = cli.spec_for(ds.spec.generator.modality());
    let curve = cascading_randomization(&model, samples, &a.method.config(cli.seed), &spec, cli.seed)?;
    write_text(&cli.out.join("randomization.csv"), &curve.to_csv())
}

/// Attribution rebuilt from a pyramid directory and its metadata sidecar.
fn read_attribution(dir: &Path) -> anyhow::Result<Attribution> {
    let p = read_pyramid(dir)?;
    let meta: serde_json::Value = match fs::read(dir.join("metadata.json")) {
        Ok(bytes) => serde_json::from_slice(&bytes)?,
        Err(_) => json!({}),
    };
    let method = meta["method"].as_str().map(Method::parse).transpose()?.unwrap_or(Method::Saliency);
    Ok(Attribution {
        domain: Domain::Wavelet(*p.spec()),
        signal_shape: p.signal_shape().to_vec(),
        values: p.clone().into_flat_values(),
        method,
        config: meta["config"].clone(),
        class: meta["class"].as_u64().unwrap_or(0) as usize,
    })
}

fn scales(cli: &Cli, a: &AttributionInput) -> anyhow::Result<()> {
    let attr = read_attribution(&a.attribution)?;
    let shares = scale_importance(&attr)?;
    let levels = shares.len() - 1;
    let mut out = String::from("scale,share\n");
    out.push_str(&format!("approx,{}\n", shares[0]));
    for (i, s) in shares[1..].iter().enumerate() {
        out.push_str(&format!("level{},{s}\n", levels - i));
    }
    write_text(&cli.out.join("scale_importance.csv"), &out)
}

fn noise(cli: &Cli, a: &InputArgs) -> anyhow::Result<()> {
    let x = read_signal(&a.input)?;
    let (noisy, added) = add_gaussian_noise_unclipped(&x, cli.seed)?;
    let ratio = rms(&added) / x.rms();
    let data = match x.clip_range() {
        Some((lo, hi)) => noisy.into_iter().map(|v| v.clamp(lo, hi)).collect(),
        None => noisy,
    };
    write_wamf(&cli.out.join("noisy.wamf"), &x.with_data(data)?)?;
    write_json(&cli.out.join("noise.json"), &json!({"snr_db": 0.0, "rms_ratio": ratio, "seed": cli.seed}))
}

fn topk(cli: &Cli, a: &TopkArgs) -> anyhow::Result<()> {
    let x = read_signal(&a.input)?;
    let attr = read_pyramid(&a.attribution)?;
    write_wamf(&cli.out.join("reconstruction.wamf"), &topk_reconstruct(&x, &attr, a.keep)?)?;
    Ok(())
}

/// 1D pyramids become a (levels + 1) × length matrix of `|coefficient|`,
/// rows ordered approx, coarsest … finest, each held over its support.
fn scale_time_matrix(p: &WaveletPyramid) -> wam_core::Result<Signal> {
    let n = p.signal_shape()[0];
    let levels = p.spec().levels;
    let mut rows: Vec<(usize, &[f64])> = vec![(levels, p.approx())];
    for level in (1..=levels).rev() {
        rows.push((level, p.band(level, 1).expect("1D pyramid has one detail band per level")));
    }
    let data = rows
        .iter()
        .flat_map(|&(level, block)| (0..n).map(move |t| block[t >> level].abs()))
        .collect();
    Signal::new(vec![rows.len(), n], data)
}

fn render(cli: &Cli, a: &RenderArgs) -> anyhow::Result<()> {
    let map = if a.input.is_dir() {
        let p = read_pyramid(&a.input)?;
        if p.signal_shape().len() == 1 {
            scale_time_matrix(&p)?
        } else {
            spatial_projection(&p)?
        }
    } else {
        read_signal(&a.input)?
    };
    let (colormap, file) = match a.colormap {
        ColormapArg::Gray => (Colormap::Gray, "heatmap.pgm"),
        ColormapArg::Heat => (Colormap::Heat, "heatmap.ppm"),
    };
    render_heatmap(&map, colormap, &cli.out.join(file))?;
    Ok(())
}
