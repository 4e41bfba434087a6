use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use specshape::apps::{
    band_modify, estimate_spectrum, interpolate_latent, interpolate_spectra, match_points, propagate_labels,
    shape_from_spectrum, style_transfer, super_resolve, Reconstruction, StyleTransferConfig,
};
use specshape::eigensolve::{spectrum_of, FemOrder, SpectrumCache};
use specshape::experiment::{mean, nn_mse, spectrum_mse, FamilyData, ModelStore};
use specshape::geometry::io::{load_shape, save_shape};
use specshape::geometry::{DatasetManifest, DrawRanges, FamilyKind, PointCloud, Shape};
use specshape::spectral_ae::{ModelBundle, Template};
use specshape_server::AppState;

use crate::config::{read_eigenvalues, seeds, write_json, RunConfig, RunManifest};
use crate::error::CliError;
use crate::{
    BandArgs, EstimateArgs, GenDataArgs, InterpolateArgs, MatchArgs, ReconstructArgs, ServeArgs, SpectrumArgs,
    StyleTransferArgs, SuperresArgs, Table1Args, TrainArgs,
};

fn args_json(args: &impl serde::Serialize) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn cache(dir: Option<&PathBuf>) -> Result<Option<SpectrumCache>, CliError> {
    dir.map(SpectrumCache::on_disk).transpose().map_err(CliError::from)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_model(path: &Path) -> Result<ModelBundle, CliError> {
    Ok(ModelBundle::load(path)?)
}

fn load_dataset(dir: &Path) -> Result<FamilyData, CliError> {
    let data = FamilyData::load(dir)?;
    if data.spectra.is_empty() {
        return Err(CliError::Data(format!("{}: dataset has no spectra (generated with --k 0)", dir.display())));
    }
    Ok(data)
}

fn save(shape: &Shape, out: &Path) -> Result<(), CliError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(save_shape(shape, out)?)
}

/// Natural file extension for shapes decoded onto `template`.
fn default_extension(template: &Template) -> &'static str {
    match (template.dim, &template.faces) {
        (2, _) => "json",
        (_, Some(_)) => "off",
        _ => "xyz",
    }
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
}

pub fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let kind: FamilyKind = a.family.into();
    let resolution = a.resolution.unwrap_or(match kind {
        FamilyKind::Blob3d => 3,
        FamilyKind::Contour2d => 64,
    });
    let n_train = a.n_train.unwrap_or(a.count - a.count / 7);
    if n_train > a.count {
        return Err(CliError::Config(format!("--n-train {n_train} exceeds --count {}", a.count)));
    }
    let cache = cache(a.cache.as_ref())?;
    let data = if a.k > 0 {
        FamilyData::generate(kind, resolution, a.count, n_train, a.seed, a.k, a.order.into(), cache.as_ref())?
    } else {
        let manifest = DatasetManifest::draw(kind, resolution, a.count, a.seed, DrawRanges::default_for(kind));
        FamilyData {
            shapes: manifest.realize()?,
            manifest,
            spectra: Vec::new(),
            n_train,
            order: a.order.into(),
        }
    };
    data.save(&a.out)?;
    RunManifest::new("gen-data", args_json(a), json!({ "data": a.seed })).write(&a.out.join("run_manifest.json"))?;
    println!("wrote {} shapes ({} for training) to {}", data.shapes.len(), n_train, a.out.display());
    Ok(())
}

pub fn spectrum(a: &SpectrumArgs) -> Result<(), CliError> {
    let shape = load_shape(&a.input)?;
    let cache = cache(a.cache.as_ref())?;
    let s = spectrum_of(&shape, a.k, a.order.into(), cache.as_ref())?;
    let value = serde_json::to_value(&s).map_err(|e| CliError::Data(e.to_string()))?;
    match &a.out {
        Some(out) => {
            write_json(out, &value)?;
            RunManifest::new("spectrum", args_json(a), Value::Null).write_beside(out)?;
        }
        None => print_json(&value),
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let t = &mut cfg.protocol.train;
    if let Some(m) = a.model {
        cfg.model = m;
    }
    t.alpha = a.alpha.unwrap_or(t.alpha);
    t.k = a.k.unwrap_or(t.k);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.lr = a.lr.unwrap_or(t.lr);
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.seed = a.seed.unwrap_or(t.seed);
    t.validate()?;

    let cache = cache(cfg.cache_dir.as_ref())?;
    let data = match &cfg.data_dir {
        Some(dir) => load_dataset(dir)?,
        None => cfg.protocol.data(cache.as_ref())?,
    };
    let variant = cfg.model.variant(cfg.protocol.train.k);
    let (model, report) = ModelStore::in_memory().get_or_train(&cfg.protocol, variant, &data)?;

    create_dir(&a.out)?;
    model.save(a.out.join("model.spsh"))?;
    if let Some(r) = &report {
        let log = a.out.join("train_log.csv");
        std::fs::write(&log, r.to_csv()).map_err(|e| CliError::io(&log, e))?;
    }
    let config = serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    RunManifest::new("train", config, seeds(&cfg.protocol)).write(&a.out.join("run_manifest.json"))?;
    let last = report.as_ref().and_then(|r| r.epochs.last());
    println!(
        "trained {:?} for {} epochs; final loss {}; wrote {}",
        variant,
        cfg.protocol.train.epochs,
        last.map_or("n/a".into(), |e| format!("{:.4e}", e.loss)),
        a.out.join("model.spsh").display()
    );
    Ok(())
}

pub fn table1(a: &Table1Args) -> Result<(), CliError> {
    let ours = load_model(&a.checkpoint)?;
    let ablation = load_model(&a.ablation)?;
    if ours.k != ablation.k {
        return Err(CliError::Data(format!("models use k = {} and k = {}", ours.k, ablation.k)));
    }
    let data = load_dataset(&a.testset)?;
    if ours.k > data.k_max() {
        return Err(CliError::Data(format!("models use k = {} but the dataset has {} eigenvalues", ours.k, data.k_max())));
    }
    let rows = [
        ("Ours", mean(&spectrum_mse(&ours, &data)?)),
        ("Ours-without-rho", mean(&spectrum_mse(&ablation, &data)?)),
        ("NN", mean(&nn_mse(&data, ours.k)?)),
    ];
    println!("{:<18} {:>12}", "method", "mse");
    for (name, mse) in &rows {
        println!("{name:<18} {mse:>12.4e}");
    }
    if let Some(out) = &a.out {
        let table = json!({
            "k": ours.k,
            "held_out": data.test_range().len(),
            "rows": rows.iter().map(|(n, m)| json!({"method": n, "mse": m})).collect::<Vec<_>>(),
        });
        write_json(out, &table)?;
        RunManifest::new("eval table1", args_json(a), json!({ "data": data.manifest.seed })).write_beside(out)?;
    }
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let rec = shape_from_spectrum(&model, &read_eigenvalues(&a.spectrum)?)?;
    save(&rec.shape, &a.out)?;
    RunManifest::new("reconstruct", args_json(a), Value::Null).write_beside(&a.out)
}

pub fn superres(a: &SuperresArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let low = load_shape(&a.input)?;
    let rec = super_resolve(&model, &low, a.order.into())?;
    save(&rec.shape, &a.out)?;
    RunManifest::new("superres", args_json(a), Value::Null).write_beside(&a.out)
}

pub fn style(a: &StyleTransferArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let style = read_eigenvalues(&a.style)?;
    let pose = load_shape(&a.pose)?;
    let cfg = StyleTransferConfig {
        w: a.w,
        steps: a.steps,
        lr: a.lr,
        patience: a.patience,
    };
    cfg.validate()?;
    let st = style_transfer(&model, &style, &pose, &cfg)?;
    save(&st.shape, &a.out)?;
    if let Some(curve) = &a.curve {
        std::fs::write(curve, st.curve_csv()).map_err(|e| CliError::io(curve, e))?;
    }
    println!(
        "alignment gap {:.4e} -> {:.4e} (best step {})",
        st.initial_gap(),
        st.final_gap(),
        st.best_step
    );
    RunManifest::new("style-transfer", args_json(a), Value::Null).write_beside(&a.out)
}

pub fn interpolate(a: &InterpolateArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let spectra = a
        .spectra
        .iter()
        .map(|p| read_eigenvalues(p))
        .collect::<Result<Vec<_>, _>>()?;
    if a.steps < 2 {
        return Err(CliError::Config(format!("--steps must be at least 2, got {}", a.steps)));
    }
    let ext = a.format.as_deref().unwrap_or(default_extension(&model.template));
    create_dir(&a.out_dir)?;
    let write = |name: String, rec: &Reconstruction| save(&rec.shape, &a.out_dir.join(format!("{name}.{ext}")));
    match spectra.as_slice() {
        [s0, s1] => {
            for i in 0..a.steps {
                let t = i as f64 / (a.steps - 1) as f64;
                write(format!("interp_{i:03}"), &interpolate_spectra(&model, s0, s1, t)?)?;
            }
        }
        [c00, c10, c01, c11] => {
            let grid = interpolate_latent(&model, [c00, c10, c01, c11], a.steps)?;
            for (i, row) in grid.iter().enumerate() {
                for (j, rec) in row.iter().enumerate() {
                    write(format!("interp_{i:03}_{j:03}"), rec)?;
                }
            }
        }
        _ => {
            return Err(CliError::Config(format!(
                "--spectra takes two spectra or four corners, got {}",
                spectra.len()
            )))
        }
    }
    RunManifest::new("interpolate", args_json(a), Value::Null).write(&a.out_dir.join("run_manifest.json"))
}

pub fn band(a: &BandArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let base = read_eigenvalues(&a.spectrum)?;
    let edited = band_modify(&base, a.lo, a.hi, a.factor)?;
    let rec = shape_from_spectrum(&model, &edited)?;
    save(&rec.shape, &a.out)?;
    if let Some(p) = &a.spectrum_out {
        write_json(p, &edited)?;
    }
    RunManifest::new("band", args_json(a), Value::Null).write_beside(&a.out)
}

pub fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let cloud = match load_shape(&a.input)? {
        Shape::PointCloud(p) => p,
        Shape::Mesh(m) => PointCloud::new(m.vertices().to_vec())?,
        Shape::Contour(_) => return Err(CliError::Data("point-set models take 3D points, not contours".into())),
    };
    let values = estimate_spectrum(&model, &cloud)?;
    let out = json!({ "k": values.len(), "values": values });
    match &a.out {
        Some(p) => {
            write_json(p, &out)?;
            RunManifest::new("estimate-spectrum", args_json(a), Value::Null).write_beside(p)?;
        }
        None => print_json(&out),
    }
    Ok(())
}

pub fn matching(a: &MatchArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let order: FemOrder = a.order.into();
    let (sa, sb) = (load_shape(&a.a)?, load_shape(&a.b)?);
    let spec = |shape: &Shape, file: &Option<PathBuf>| -> Result<Vec<f64>, CliError> {
        match file {
            Some(p) => read_eigenvalues(p),
            None => Ok(spectrum_of(shape, model.k, order, None)?.values),
        }
    };
    let (spec_a, spec_b) = (spec(&sa, &a.spec_a)?, spec(&sb, &a.spec_b)?);
    let corr = match_points(&model, &sa.flat_coords(), &spec_a, &sb.flat_coords(), &spec_b)?;
    let mut out = json!({ "map": corr.map, "quality": corr.quality });
    if let Some(p) = &a.labels {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let labels: Vec<Value> = serde_json::from_str(&text).map_err(|e| CliError::io(p, e))?;
        if labels.len() != sb.num_points() {
            return Err(CliError::Data(format!(
                "{} labels for {} points of {}",
                labels.len(),
                sb.num_points(),
                a.b.display()
            )));
        }
        out["labels"] = Value::Array(propagate_labels(&corr, &labels)?);
    }
    write_json(&a.out, &out)?;
    RunManifest::new("match", args_json(a), Value::Null).write_beside(&a.out)
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let model = a.checkpoint.as_deref().map(load_model).transpose()?;
    let data = a.data.as_deref().map(load_dataset).transpose()?;
    let state = AppState::new(model, data);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(e.to_string()))?;
    eprintln!("serving on http://{}", a.addr);
    rt.block_on(specshape_server::serve(a.addr, state))
        .map_err(|e| CliError::Config(format!("{}: {e}", a.addr)))
}
