//! Command-line front end over the pipeline library. Each subcommand
//! reads declared inputs, writes its artifacts under `--out`, and prints
//! a one-line summary to stdout. Exit codes: 0 success, 1 input error,
//! 2 internal invariant violation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use povmap::annotations::{
    parse_annotations, parse_grouped, parse_image_dims, to_normalized, validate_image,
    write_grouped, write_normalized, ClassMap, GroupedAnnotation, ImageValidation, RawAnnotation,
};
use povmap::config::PipelineConfig;
use povmap::deteval::{
    confusion_matrix, evaluate, parse_detections, write_confusion, write_eval_report,
};
use povmap::error::{Error, Result};
use povmap::etl::{
    aggregate_counts, check_class_coverage, concat_features, coverage_report, detector_features,
    parse_ensemble, parse_image_geocodes, parse_provinces, parse_split_manifest, parse_tiles,
    relativize, split_provinces, write_detector_features, write_ensemble, write_split_manifest,
    FeatureTable,
};
use povmap::geo::PolygonSet;
use povmap::gmm::{fit_gmm_1d, label_centroids, GmmFitOptions};
use povmap::grid::{extract_centroids, parse_centroid_table, write_centroid_table, ExtractOptions};
use povmap::raster::AsciiGridRaster;
use povmap::ridge::{kfold_cv, r_squared, ridge_fit, rmse};
use povmap::sampler::{
    class_weights, count_classes, parse_weight_fixture, sample_chip, write_quadrant_tables,
    QuadrantTable,
};
use povmap::seed::{stage_rng, stage_seed, uniform_f64};
use povmap::table::{format_float, write_table, Cell};

#[derive(Parser)]
#[command(
    name = "povmap",
    version,
    about = "Deterministic pipeline tools for satellite-based poverty mapping"
)]
struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized subcommands; each stage derives its own.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages; 0 means one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract tile centers from nightlight and population rasters.
    Centroids(CentroidsArgs),
    /// Cluster tile nightlight sums and label each tile center.
    Nightlabels(NightlabelsArgs),
    /// Validate raw annotations, group classes, and emit label files.
    Annotations(AnnotationsArgs),
    /// Build quadrant tables and sample training chips.
    Sampler(SamplerArgs),
    /// Score detections against ground truth boxes.
    EvalDet(EvalDetArgs),
    /// Turn detections into per-province regression features.
    Etl(EtlArgs),
    /// Concatenate per-model feature tables with province targets.
    Ensemble(EnsembleArgs),
    /// Split provinces into train and holdout sets.
    Split(SplitArgs),
    /// Fit ridge regression on the train split and score the holdout.
    Regress(RegressArgs),
    /// Cross-validate ridge regression over a lambda grid.
    Cv(CvArgs),
}

#[derive(Args)]
struct CentroidsArgs {
    /// Nightlight raster in ASCII grid form.
    #[arg(long)]
    vnl: Option<PathBuf>,
    /// Population raster in ASCII grid form.
    #[arg(long)]
    worldpop: Option<PathBuf>,
    /// Polygon file, one lon-lat ring per line.
    #[arg(long)]
    aoi: Option<PathBuf>,
    /// Tile footprint side in meters.
    #[arg(long)]
    tile_side_m: Option<f64>,
    /// Minimum footprint population for a tile to survive.
    #[arg(long)]
    min_pop: Option<f64>,
}

#[derive(Args)]
struct NightlabelsArgs {
    /// Tile center table from the centroids subcommand.
    #[arg(long)]
    centroids: Option<PathBuf>,
    /// Number of mixture components.
    #[arg(long)]
    gmm_k: Option<usize>,
    /// Tile footprint side in meters, used to rebuild footprints.
    #[arg(long)]
    tile_side_m: Option<f64>,
}

#[derive(Args)]
struct AnnotationsArgs {
    /// Raw annotation table: image_id, corners, class_name.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Image dimension table: image_id, width, height.
    #[arg(long)]
    image_dims: Option<PathBuf>,
    /// Child-to-parent class map; built-in mapping when omitted.
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Warn when a class keeps fewer instances than this.
    #[arg(long)]
    min_instances: Option<u64>,
}

#[derive(Args)]
struct SamplerArgs {
    /// Raw annotation table: image_id, corners, class_name.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Image dimension table: image_id, width, height.
    #[arg(long)]
    image_dims: Option<PathBuf>,
    /// Child-to-parent class map; built-in mapping when omitted.
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Output chip side in pixels.
    #[arg(long)]
    chip_size: Option<u32>,
    /// Chips drawn per image.
    #[arg(long)]
    chips_per_image: Option<u32>,
    /// Minimum clipped-area fraction for a box to survive.
    #[arg(long)]
    clip_retention: Option<f64>,
    /// Build quadrant tables from a precomputed weight fixture and
    /// print them instead of sampling chips.
    #[arg(long)]
    dry_run: bool,
    /// Weight fixture for --dry-run: orig_filename, orig_width,
    /// orig_height, w00..w33.
    #[arg(long)]
    quadrant_weights: Option<PathBuf>,
}

#[derive(Args)]
struct EvalDetArgs {
    /// Detection table: image_id, class_index, corners, confidence.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Ground truth table: image_id, class_index, corners.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Overlap threshold for the confusion matrix.
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Confidence cut for the confusion matrix.
    #[arg(long)]
    conf_threshold: Option<f64>,
}

#[derive(Args)]
struct EtlArgs {
    /// Detection table: image_id, class_index, corners, confidence.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Image-to-province map: image_id, geocode.
    #[arg(long)]
    image_geocodes: Option<PathBuf>,
    /// Province table: geocode, name, poverty_rate, population.
    #[arg(long)]
    provinces: Option<PathBuf>,
    /// Sampled tile table: geocode, population.
    #[arg(long)]
    tiles: Option<PathBuf>,
    /// Confidence cut applied before counting.
    #[arg(long)]
    conf_threshold: Option<f64>,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Feature table; repeat once per upstream model, order matters.
    #[arg(long)]
    features: Vec<PathBuf>,
    /// Province table: geocode, name, poverty_rate, population.
    #[arg(long)]
    provinces: Option<PathBuf>,
    /// Keep the intersection of geocodes instead of erroring on
    /// mismatched tables.
    #[arg(long)]
    permissive: bool,
}

#[derive(Args)]
struct SplitArgs {
    /// Province table: geocode, name, poverty_rate, population.
    #[arg(long)]
    provinces: Option<PathBuf>,
    /// Fraction of provinces held out for testing.
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args)]
struct RegressArgs {
    /// Ensemble table: geocode, features, poverty_rate.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Split manifest: geocode, split.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Ridge penalty.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct CvArgs {
    /// Ensemble table: geocode, features, poverty_rate.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Number of folds.
    #[arg(long)]
    cv_k: Option<usize>,
    /// Whitespace-separated penalty grid, e.g. "0.01 0.1 1".
    #[arg(long)]
    lambda_grid: Option<String>,
}

/// Write to stdout, treating a closed pipe as a normal early exit
/// instead of a panic.
fn emit(text: &str) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().write_all(text.as_bytes()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(2);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; they are not
            // input errors.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            emit(&format!("{summary}\n"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Internal(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(&read_file(path)?)?;
    }
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Error::invalid(format!("cannot set up {} threads: {e}", cfg.threads)))?;
    }
    let out = cli.out;
    match cli.command {
        Command::Centroids(args) => cmd_centroids(&cfg, &out, args),
        Command::Nightlabels(args) => cmd_nightlabels(&cfg, &out, args),
        Command::Annotations(args) => cmd_annotations(&cfg, &out, args),
        Command::Sampler(args) => cmd_sampler(&cfg, &out, args),
        Command::EvalDet(args) => cmd_eval_det(&cfg, &out, args),
        Command::Etl(args) => cmd_etl(&cfg, &out, args),
        Command::Ensemble(args) => cmd_ensemble(&cfg, &out, args),
        Command::Split(args) => cmd_split(&cfg, &out, args),
        Command::Regress(args) => cmd_regress(&cfg, &out, args),
        Command::Cv(args) => cmd_cv(&cfg, &out, args),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::invalid(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, content)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

/// Resolve a required input: flag wins, then the config path key.
fn require_input(flag: &Option<PathBuf>, cfg: &PipelineConfig, key: &str) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    if let Some(p) = cfg.path(key) {
        return Ok(PathBuf::from(p));
    }
    Err(Error::invalid(format!(
        "missing input `{key}`: pass --{} or set `{key}` in the config",
        key.replace('_', "-")
    )))
}

/// Image id minus its final extension, usable as an output file stem.
fn image_stem(image_id: &str) -> String {
    let base = image_id.rsplit_once('.').map_or(image_id, |(stem, _)| stem);
    base.replace(['/', '\\'], "_")
}

/// Group raw annotations by image, keeping input order within an image.
fn group_by_image(raw: &[RawAnnotation]) -> BTreeMap<String, Vec<RawAnnotation>> {
    let mut by_image: BTreeMap<String, Vec<RawAnnotation>> = BTreeMap::new();
    for a in raw {
        by_image.entry(a.image_id.clone()).or_default().push(a.clone());
    }
    by_image
}

/// Validate every image against its dimensions. Returns kept boxes per
/// image, validation report rows, and the dropped-image count.
#[allow(clippy::type_complexity)]
fn validate_all(
    by_image: &BTreeMap<String, Vec<RawAnnotation>>,
    dims: &BTreeMap<String, (u32, u32)>,
    class_map: &ClassMap,
) -> Result<(BTreeMap<String, Vec<GroupedAnnotation>>, Vec<Vec<Cell>>, usize)> {
    let mut kept_by_image = BTreeMap::new();
    let mut report_rows = Vec::with_capacity(by_image.len());
    let mut dropped = 0usize;
    for (id, annos) in by_image {
        let &(w, h) = dims
            .get(id)
            .ok_or_else(|| Error::invalid(format!("image `{id}` missing from the dimension table")))?;
        match validate_image(annos, (w, h), class_map) {
            ImageValidation::Kept { kept, removed_incorrect, filtered_rejected } => {
                report_rows.push(vec![
                    Cell::from(id.clone()),
                    Cell::from("kept"),
                    Cell::from(kept.len()),
                    Cell::from(removed_incorrect),
                    Cell::from(filtered_rejected),
                ]);
                kept_by_image.insert(id.clone(), kept);
            }
            ImageValidation::Dropped { incorrect } => {
                report_rows.push(vec![
                    Cell::from(id.clone()),
                    Cell::from("dropped"),
                    Cell::from(0usize),
                    Cell::from(incorrect),
                    Cell::from(0usize),
                ]);
                dropped += 1;
            }
        }
    }
    Ok((kept_by_image, report_rows, dropped))
}

fn load_class_map(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<ClassMap> {
    let path = match flag {
        Some(p) => Some(p.clone()),
        None => cfg.path("class_map").map(PathBuf::from),
    };
    match path {
        Some(p) => ClassMap::parse(&read_file(&p)?),
        None => Ok(ClassMap::xview()),
    }
}

fn cmd_centroids(cfg: &PipelineConfig, out: &Path, args: CentroidsArgs) -> Result<String> {
    let vnl = AsciiGridRaster::parse(&read_file(&require_input(&args.vnl, cfg, "vnl")?)?)?;
    let pop =
        AsciiGridRaster::parse(&read_file(&require_input(&args.worldpop, cfg, "worldpop")?)?)?;
    let aoi = PolygonSet::parse(&read_file(&require_input(&args.aoi, cfg, "aoi")?)?)?;
    let opts = ExtractOptions {
        side_m: args.tile_side_m.unwrap_or(cfg.tile_side_m),
        min_pop: args.min_pop.unwrap_or(cfg.min_pop),
    };
    let records = extract_centroids(&vnl, &pop, &aoi, &opts)?;
    let path = out.join("centroids.tsv");
    write_file(&path, &write_centroid_table(&records)?)?;
    Ok(format!(
        "centroids: {} tile centers ({} m side, min population {}) -> {}",
        records.len(),
        opts.side_m,
        opts.min_pop,
        path.display()
    ))
}

fn cmd_nightlabels(cfg: &PipelineConfig, out: &Path, args: NightlabelsArgs) -> Result<String> {
    let side_m = args.tile_side_m.unwrap_or(cfg.tile_side_m);
    let table_path = require_input(&args.centroids, cfg, "centroids")?;
    let mut records = parse_centroid_table(&read_file(&table_path)?, side_m)?;
    let opts = GmmFitOptions {
        k: args.gmm_k.unwrap_or(cfg.gmm_k),
        max_iter: cfg.gmm_max_iter,
        tol: cfg.gmm_tol,
    };
    let values: Vec<f64> = records.iter().map(|r| r.nightlight_sum).collect();
    let fit = fit_gmm_1d(&values, &opts)?;
    label_centroids(&mut records, &fit.model);
    let model_path = out.join("gmm_model.txt");
    write_file(&model_path, &fit.model.write())?;
    let labeled_path = out.join("labeled_centroids.tsv");
    write_file(&labeled_path, &write_centroid_table(&records)?)?;
    let mut counts = vec![0usize; opts.k];
    for r in &records {
        counts[usize::from(r.night_class.unwrap_or(0))] += 1;
    }
    let counts: Vec<String> = counts.iter().map(usize::to_string).collect();
    Ok(format!(
        "nightlabels: {} centers into {} classes ({}){} after {} iterations -> {}",
        records.len(),
        opts.k,
        counts.join("/"),
        if fit.converged { "" } else { ", not converged" },
        fit.log_likelihoods.len(),
        labeled_path.display()
    ))
}

fn cmd_annotations(cfg: &PipelineConfig, out: &Path, args: AnnotationsArgs) -> Result<String> {
    let raw = parse_annotations(&read_file(&require_input(&args.annotations, cfg, "annotations")?)?)?;
    let dims = parse_image_dims(&read_file(&require_input(&args.image_dims, cfg, "image_dims")?)?)?;
    let class_map = load_class_map(&args.class_map, cfg)?;
    let by_image = group_by_image(&raw);
    let (kept_by_image, report_rows, dropped) = validate_all(&by_image, &dims, &class_map)?;

    let mut stems: BTreeMap<String, &str> = BTreeMap::new();
    let mut grouped = Vec::new();
    for (id, kept) in &kept_by_image {
        let stem = image_stem(id);
        if let Some(other) = stems.insert(stem.clone(), id) {
            return Err(Error::invalid(format!(
                "images `{other}` and `{id}` collide on label file stem `{stem}`"
            )));
        }
        let &(w, h) = dims.get(id).expect("validated images have dimensions");
        let boxes: Vec<_> =
            kept.iter().map(|a| to_normalized(a.bbox, a.class_index, w, h)).collect();
        write_file(&out.join("labels").join(format!("{stem}.txt")), &write_normalized(&boxes))?;
        grouped.extend(kept.iter().cloned());
    }
    write_file(&out.join("grouped.tsv"), &write_grouped(&grouped)?)?;
    let report = write_table(
        &["image_id", "status", "kept", "removed_incorrect", "filtered_rejected"],
        &report_rows,
    )?;
    write_file(&out.join("validation.tsv"), &report)?;

    let min_instances = args.min_instances.unwrap_or(cfg.min_instances);
    let deficient = check_class_coverage(&grouped, min_instances);
    for line in coverage_report(&deficient, min_instances) {
        eprintln!("warning: {line}");
    }
    Ok(format!(
        "annotations: {} images kept, {} dropped, {} boxes written ({} classes under {} instances) -> {}",
        kept_by_image.len(),
        dropped,
        grouped.len(),
        deficient.len(),
        min_instances,
        out.display()
    ))
}

fn cmd_sampler(cfg: &PipelineConfig, out: &Path, args: SamplerArgs) -> Result<String> {
    if args.dry_run {
        let fixture_path = require_input(&args.quadrant_weights, cfg, "quadrant_weights")?;
        let fixture = parse_weight_fixture(&read_file(&fixture_path)?)?;
        let tables: Vec<QuadrantTable> = fixture
            .iter()
            .map(|(name, w, h, sums)| QuadrantTable::from_weights(name, *w, *h, sums))
            .collect::<Result<_>>()?;
        let text = write_quadrant_tables(&tables)?;
        emit(&text);
        let path = out.join("quadrants.tsv");
        write_file(&path, &text)?;
        return Ok(format!(
            "sampler: dry run, quadrant tables for {} images -> {}",
            tables.len(),
            path.display()
        ));
    }

    let seed = cfg.require_seed()?;
    let raw = parse_annotations(&read_file(&require_input(&args.annotations, cfg, "annotations")?)?)?;
    let dims = parse_image_dims(&read_file(&require_input(&args.image_dims, cfg, "image_dims")?)?)?;
    let class_map = load_class_map(&args.class_map, cfg)?;
    let by_image = group_by_image(&raw);
    let (kept_by_image, _, dropped) = validate_all(&by_image, &dims, &class_map)?;

    let all_kept: Vec<GroupedAnnotation> =
        kept_by_image.values().flat_map(|v| v.iter().cloned()).collect();
    let (weights, warnings) = class_weights(&count_classes(&all_kept))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }

    let chip_size = args.chip_size.unwrap_or(cfg.chip_size);
    let chips_per_image = args.chips_per_image.unwrap_or(cfg.chips_per_image);
    let retention = args.clip_retention.unwrap_or(cfg.clip_retention);

    let mut stems: BTreeMap<String, &str> = BTreeMap::new();
    let mut tables = Vec::new();
    let mut manifest_rows = Vec::new();
    let mut empty_images = 0usize;
    let mut total_boxes = 0usize;
    for (id, annos) in &kept_by_image {
        if annos.is_empty() {
            empty_images += 1;
            continue;
        }
        let stem = image_stem(id);
        if let Some(other) = stems.insert(stem.clone(), id) {
            return Err(Error::invalid(format!(
                "images `{other}` and `{id}` collide on chip file stem `{stem}`"
            )));
        }
        let &(w, h) = dims.get(id).expect("validated images have dimensions");
        let table = QuadrantTable::from_annotations(id, w, h, annos, &weights)?;
        let mut rng = stage_rng(seed, &format!("sampler/{id}"));
        for chip_index in 0..chips_per_image {
            let u = uniform_f64(&mut rng);
            let quadrant = table.sample(u)?;
            let chip = sample_chip(
                w,
                h,
                table.quadrant_bounds(quadrant),
                annos,
                chip_size,
                retention,
                &mut rng,
            )?;
            let record = &table.records[quadrant];
            let file = format!("chips/{stem}_c{chip_index}.txt");
            write_file(&out.join(&file), &write_normalized(&chip.boxes))?;
            total_boxes += chip.boxes.len();
            manifest_rows.push(vec![
                Cell::from(id.clone()),
                Cell::from(chip_index),
                Cell::from(record.row_i),
                Cell::from(record.col_j),
                Cell::from(chip.origin_x),
                Cell::from(chip.origin_y),
                Cell::from(chip.size),
                Cell::from(chip.boxes.len()),
                Cell::from(file),
            ]);
        }
        tables.push(table);
    }
    write_file(&out.join("quadrants.tsv"), &write_quadrant_tables(&tables)?)?;
    let manifest = write_table(
        &[
            "image_id",
            "chip_index",
            "row_i",
            "col_j",
            "origin_x",
            "origin_y",
            "size",
            "n_boxes",
            "file",
        ],
        &manifest_rows,
    )?;
    write_file(&out.join("chips.tsv"), &manifest)?;
    Ok(format!(
        "sampler: {} chips of {}px from {} images ({} dropped, {} without boxes), {} boxes -> {}",
        manifest_rows.len(),
        chip_size,
        tables.len(),
        dropped,
        empty_images,
        total_boxes,
        out.display()
    ))
}

fn cmd_eval_det(cfg: &PipelineConfig, out: &Path, args: EvalDetArgs) -> Result<String> {
    let dets = parse_detections(&read_file(&require_input(&args.detections, cfg, "detections")?)?)?;
    let gts = parse_grouped(&read_file(&require_input(&args.ground_truth, cfg, "ground_truth")?)?)?;
    let report = evaluate(&dets, &gts)?;
    let (summary, classes) = write_eval_report(&report);
    write_file(&out.join("eval_summary.txt"), &summary)?;
    write_file(&out.join("eval_classes.tsv"), &classes?)?;

    let mut pr_rows = Vec::new();
    for c in &report.classes {
        for &(recall, precision) in &c.pr_points_50 {
            pr_rows.push(vec![
                Cell::from(c.class_index),
                Cell::from(recall),
                Cell::from(precision),
            ]);
        }
    }
    let pr = write_table(&["class_index", "recall", "precision"], &pr_rows)?;
    write_file(&out.join("pr_curve.tsv"), &pr)?;

    let iou_threshold = args.iou_threshold.unwrap_or(cfg.iou_threshold);
    let conf_threshold = args.conf_threshold.unwrap_or(cfg.conf_threshold);
    let matrix = confusion_matrix(&dets, &gts, iou_threshold, conf_threshold);
    write_file(&out.join("confusion.tsv"), &write_confusion(&matrix)?)?;
    Ok(format!(
        "eval-det: map50 {} map5095 {} over {} classes, {} detections, {} ground truths -> {}",
        format_float(report.map50),
        format_float(report.map5095),
        report.classes.len(),
        dets.len(),
        gts.len(),
        out.display()
    ))
}

fn cmd_etl(cfg: &PipelineConfig, out: &Path, args: EtlArgs) -> Result<String> {
    let dets = parse_detections(&read_file(&require_input(&args.detections, cfg, "detections")?)?)?;
    let image_geocodes =
        parse_image_geocodes(&read_file(&require_input(&args.image_geocodes, cfg, "image_geocodes")?)?)?;
    let provinces = parse_provinces(&read_file(&require_input(&args.provinces, cfg, "provinces")?)?)?;
    let tiles = parse_tiles(&read_file(&require_input(&args.tiles, cfg, "tiles")?)?)?;
    let conf_threshold = args.conf_threshold.unwrap_or(cfg.conf_threshold);

    let counts = aggregate_counts(&dets, &image_geocodes, conf_threshold)?;
    let population: BTreeMap<&str, f64> =
        provinces.iter().map(|p| (p.geocode.as_str(), p.population)).collect();
    let mut tiles_by_geo: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (geocode, pop) in &tiles {
        tiles_by_geo.entry(geocode.as_str()).or_default().push(*pop);
    }
    let mut rows = Vec::with_capacity(counts.len());
    let mut truck_fallbacks = 0usize;
    for (geocode, class_counts) in &counts {
        let &pop_province = population.get(geocode.as_str()).ok_or_else(|| {
            Error::invalid(format!("geocode `{geocode}` missing from the province table"))
        })?;
        let tile_pops = tiles_by_geo.get(geocode.as_str()).ok_or_else(|| {
            Error::invalid(format!("geocode `{geocode}` has no rows in the tile table"))
        })?;
        let (rel, truck_zero) = relativize(class_counts);
        if truck_zero {
            truck_fallbacks += 1;
            eprintln!("warning: province `{geocode}` has no truck detections; counts kept absolute");
        }
        rows.push(detector_features(geocode, rel, tile_pops, pop_province));
    }
    let path = out.join("detector_features.tsv");
    write_file(&path, &write_detector_features(&rows)?)?;
    Ok(format!(
        "etl: features for {} provinces at confidence {} ({} truck-zero fallbacks) -> {}",
        rows.len(),
        conf_threshold,
        truck_fallbacks,
        path.display()
    ))
}

fn cmd_ensemble(cfg: &PipelineConfig, out: &Path, args: EnsembleArgs) -> Result<String> {
    let feature_paths: Vec<PathBuf> = if args.features.is_empty() {
        cfg.path_list("features").into_iter().map(PathBuf::from).collect()
    } else {
        args.features
    };
    if feature_paths.is_empty() {
        return Err(Error::invalid(
            "missing input `features`: pass --features or set `features` in the config",
        ));
    }
    let tables: Vec<FeatureTable> = feature_paths
        .iter()
        .map(|p| FeatureTable::parse(&read_file(p)?))
        .collect::<Result<_>>()?;
    let provinces = parse_provinces(&read_file(&require_input(&args.provinces, cfg, "provinces")?)?)?;
    let (ensemble, warnings) = concat_features(&tables, &provinces, args.permissive)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let path = out.join("ensemble.tsv");
    write_file(&path, &write_ensemble(&ensemble)?)?;
    Ok(format!(
        "ensemble: {} provinces x {} features from {} tables -> {}",
        ensemble.rows.len(),
        ensemble.feature_names.len(),
        tables.len(),
        path.display()
    ))
}

fn cmd_split(cfg: &PipelineConfig, out: &Path, args: SplitArgs) -> Result<String> {
    let seed = cfg.require_seed()?;
    let provinces = parse_provinces(&read_file(&require_input(&args.provinces, cfg, "provinces")?)?)?;
    let geocodes: Vec<String> = provinces.iter().map(|p| p.geocode.clone()).collect();
    let test_fraction = args.test_fraction.unwrap_or(cfg.test_fraction);
    let (train, test) = split_provinces(&geocodes, test_fraction, stage_seed(seed, "split"))?;
    let path = out.join("split.tsv");
    write_file(&path, &write_split_manifest(&train, &test)?)?;
    Ok(format!(
        "split: {} train / {} test provinces (fraction {}) -> {}",
        train.len(),
        test.len(),
        test_fraction,
        path.display()
    ))
}

/// Pull feature rows and targets for the listed geocodes.
fn ensemble_matrix(
    table: &povmap::etl::EnsembleTable,
    geocodes: &[String],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let by_geo: BTreeMap<&str, &povmap::etl::EnsembleRow> =
        table.rows.iter().map(|r| (r.geocode.as_str(), r)).collect();
    let mut xs = Vec::with_capacity(geocodes.len());
    let mut ys = Vec::with_capacity(geocodes.len());
    for g in geocodes {
        let row = by_geo.get(g.as_str()).ok_or_else(|| {
            Error::invalid(format!(
                "geocode `{g}` in the split manifest is missing from the ensemble table"
            ))
        })?;
        xs.push(row.features.clone());
        ys.push(row.poverty_rate);
    }
    Ok((xs, ys))
}

fn cmd_regress(cfg: &PipelineConfig, out: &Path, args: RegressArgs) -> Result<String> {
    let ensemble = parse_ensemble(&read_file(&require_input(&args.ensemble, cfg, "ensemble")?)?)?;
    let (train, test) = parse_split_manifest(&read_file(&require_input(&args.split, cfg, "split")?)?)?;
    let lambda = args.lambda.unwrap_or(cfg.lambda);
    let (x_train, y_train) = ensemble_matrix(&ensemble, &train)?;
    let (x_test, y_test) = ensemble_matrix(&ensemble, &test)?;
    for (side, n) in [("train", y_train.len()), ("test", y_test.len())] {
        if n < 2 {
            return Err(Error::invalid(format!(
                "{side} split has {n} province(s); metrics need at least 2 \
                 (adjust test_fraction or provide more provinces)"
            )));
        }
    }
    let model = ridge_fit(&x_train, &y_train, lambda)?;
    let pred_train = model.predict(&x_train)?;
    let pred_test = model.predict(&x_test)?;
    let train_r2 = r_squared(&y_train, &pred_train)?;
    let test_r2 = r_squared(&y_test, &pred_test)?;
    let train_rmse = rmse(&y_train, &pred_train)?;
    let test_rmse = rmse(&y_test, &pred_test)?;
    write_file(&out.join("ridge_model.txt"), &model.write())?;
    let metrics = format!(
        "lambda = {lambda}\nn_train = {}\nn_test = {}\ntrain_r2 = {train_r2}\ntrain_rmse = {train_rmse}\ntest_r2 = {test_r2}\ntest_rmse = {test_rmse}\n",
        y_train.len(),
        y_test.len()
    );
    write_file(&out.join("regress_metrics.txt"), &metrics)?;
    Ok(format!(
        "regress: lambda {} train r2 {} test r2 {} on {}/{} provinces -> {}",
        lambda,
        format_float(train_r2),
        format_float(test_r2),
        y_train.len(),
        y_test.len(),
        out.display()
    ))
}

fn cmd_cv(cfg: &PipelineConfig, out: &Path, args: CvArgs) -> Result<String> {
    let seed = cfg.require_seed()?;
    let ensemble = parse_ensemble(&read_file(&require_input(&args.ensemble, cfg, "ensemble")?)?)?;
    let rows: Vec<Vec<f64>> = ensemble.rows.iter().map(|r| r.features.clone()).collect();
    let y: Vec<f64> = ensemble.rows.iter().map(|r| r.poverty_rate).collect();
    let k = args.cv_k.unwrap_or(cfg.cv_k);
    let grid = match &args.lambda_grid {
        Some(text) => {
            // Reuse the config parser so grid validation stays in one place.
            let mut scratch = PipelineConfig::default();
            scratch.set("lambda_grid", text)?;
            scratch.lambda_grid
        }
        None => cfg.lambda_grid.clone(),
    };
    let report = kfold_cv(&rows, &y, k, &grid, stage_seed(seed, "cv"))?;
    let join = |f: &dyn Fn(&povmap::ridge::EvalMetrics) -> String| {
        report.folds.iter().map(|m| f(m)).collect::<Vec<_>>().join(" ")
    };
    let grid_lambdas: Vec<String> = report.grid.iter().map(|(l, _)| format!("{l}")).collect();
    let grid_r2: Vec<String> = report.grid.iter().map(|(_, r)| format!("{r}")).collect();
    let text = format!(
        "lambda = {}\nmean_r2 = {}\nmean_rmse = {}\nfolds = {}\ngrid_lambdas = {}\ngrid_mean_r2 = {}\nfold_r2 = {}\nfold_rmse = {}\nfold_n = {}\n",
        report.lambda,
        report.mean_r2,
        report.mean_rmse,
        report.folds.len(),
        grid_lambdas.join(" "),
        grid_r2.join(" "),
        join(&|m| format!("{}", m.r_squared)),
        join(&|m| format!("{}", m.rmse)),
        join(&|m| format!("{}", m.n)),
    );
    let path = out.join("cv_report.txt");
    write_file(&path, &text)?;
    Ok(format!(
        "cv: mean r2 {} rmse {} at lambda {} over {} folds -> {}",
        format_float(report.mean_r2),
        format_float(report.mean_rmse),
        report.lambda,
        report.folds.len(),
        path.display()
    ))
}
