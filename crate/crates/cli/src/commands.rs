use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use ldvqe_core::codec::{
    classify_frame, encode_external, segment_video, simulate_low_delay, FrameKind,
};
use ldvqe_core::enhance::{run_variants, trim_analysis, Enhancer};
use ldvqe_core::ensemble::{tta_enhance, TtaConfig};
use ldvqe_core::fusion::{apply_plan, build_plan, detect_slow_motion, Source, VariantSet};
use ldvqe_core::metrics::{combined_loss, psnr_sequence, MetricsReport};
use ldvqe_core::process::CommandTemplate;
use ldvqe_core::vio::{self, ReportFormat};
use ldvqe_core::{Rational, Result as CoreResult, VideoSequence};

use crate::config::RunConfig;
use crate::output::Staged;
use crate::CliError;

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::config_msg(format!("--{flag} is required")))
}

fn is_raw(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("yuv"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into())
}

pub fn read_video(path: &Path, cfg: &RunConfig) -> Result<VideoSequence, CliError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::with_code(
            "input-not-found",
            format!("{} does not exist", path.display()),
        ),
        _ => CliError::with_code("io", format!("{}: {e}", path.display())),
    })?;
    let reader = BufReader::new(file);
    let seq = if is_raw(path) {
        let raw = &cfg.raw;
        if raw.width == 0 || raw.height == 0 {
            return Err(CliError::config_msg(
                "raw .yuv input needs [raw] width and height",
            ));
        }
        let fps = Rational::new(raw.fps_num, raw.fps_den).map_err(CliError::config)?;
        vio::read_raw_yuv(reader, raw.width, raw.height, raw.layout, fps)?
    } else {
        vio::read_y4m(reader)?
    };
    Ok(seq.with_name(stem(path)))
}

fn encode_video(seq: &VideoSequence, path: &Path) -> CoreResult<Vec<u8>> {
    let mut buf = Vec::new();
    if is_raw(path) {
        vio::write_raw_yuv(seq, &mut buf)?;
    } else {
        vio::write_y4m(seq, &mut buf)?;
    }
    Ok(buf)
}

fn report_format(cfg: &RunConfig) -> ReportFormat {
    cfg.report.unwrap_or(ReportFormat::Json)
}

fn extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    }
}

fn default_report_path(output: &Path, format: ReportFormat) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(format!(".report.{}", extension(format)));
    PathBuf::from(name)
}

fn summary_path(report: &Path) -> PathBuf {
    let mut name = report.with_extension("").into_os_string();
    name.push(".summary.csv");
    PathBuf::from(name)
}

/// Stages the report (and, for CSV, its scalar summary), or prints it when no
/// path is given.
fn emit_report(
    report: &MetricsReport,
    cfg: &RunConfig,
    path: Option<&Path>,
    staged: &mut Staged,
) -> Result<(), CliError> {
    let format = report_format(cfg);
    let mut buf = Vec::new();
    vio::write_report(report, format, &mut buf)?;
    match path {
        Some(p) => {
            staged.add(p, &buf)?;
            if format == ReportFormat::Csv {
                let mut summary = Vec::new();
                vio::write_summary_csv(report, &mut summary)?;
                staged.add(&summary_path(p), &summary)?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&buf)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::with_code("io", e.to_string()))?;
        }
    }
    Ok(())
}

fn load_gt(cfg: &RunConfig, input: &VideoSequence) -> Result<Option<VideoSequence>, CliError> {
    let Some(path) = cfg.gt.as_deref() else {
        return Ok(None);
    };
    let gt = read_video(path, cfg)?;
    if gt.len() != input.len() {
        return Err(CliError::with_code(
            "length-mismatch",
            format!(
                "ground truth has {} frames, input has {}",
                gt.len(),
                input.len()
            ),
        ));
    }
    if !gt.frame(0).is_compatible(input.frame(0)) {
        return Err(CliError::with_code(
            "shape-mismatch",
            format!("ground truth is {}, input is {}", gt.shape(), input.shape()),
        ));
    }
    Ok(Some(gt))
}

fn enhance_maybe_tta(
    enhancer: &dyn Enhancer,
    seq: &VideoSequence,
    tta: Option<&TtaConfig>,
    warnings: &mut Vec<String>,
) -> CoreResult<VideoSequence> {
    match tta {
        None => ldvqe_core::enhance::enhance_checked(enhancer, seq),
        Some(cfg) => {
            let out = tta_enhance(seq, enhancer, cfg)?;
            warnings.extend(out.warnings);
            Ok(out.sequence)
        }
    }
}

/// Wraps an enhancer so every call goes through test-time augmentation.
struct TtaWrapped<'a> {
    inner: &'a dyn Enhancer,
    cfg: TtaConfig,
    name: String,
}

impl Enhancer for TtaWrapped<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn enhance(&self, input: &VideoSequence) -> CoreResult<VideoSequence> {
        enhance_maybe_tta(self.inner, input, Some(&self.cfg), &mut Vec::new())
    }
}

fn add_psnr(
    report: &mut MetricsReport,
    label: &str,
    x: &VideoSequence,
    gt: &VideoSequence,
    cfg: &RunConfig,
) -> CoreResult<()> {
    let r = psnr_sequence(x, &gt.prefix(x.len())?, &cfg.psnr)?;
    report
        .aggregates
        .insert(format!("psnr_mean_{label}"), r.aggregates["psnr_mean"]);
    let mut col = r.series["psnr"].clone();
    col.resize(report.frame_count, None);
    report.series.insert(format!("psnr_{label}"), col);
    Ok(())
}

pub fn cmd_fuse(cfg: &RunConfig) -> Result<(), CliError> {
    let input_path = required(&cfg.input, "input")?;
    let output_path = required(&cfg.output, "output")?;
    let input = read_video(input_path, cfg)?;
    let gt = load_gt(cfg, &input)?;
    let fusion = cfg.fusion_config();
    let main = cfg.enhancers.main.build()?;
    let intra = cfg.enhancers.intra.build()?;

    let tta_cfg = cfg.tta.enabled.then(|| cfg.tta_config());
    let main_e = wrap(main.as_ref(), tta_cfg.as_ref());
    let intra_e = wrap(intra.as_ref(), tta_cfg.as_ref());
    let variants: VariantSet = run_variants(&input, main_e.as_ref(), intra_e.as_ref(), &fusion)?;
    let decision = detect_slow_motion(&input, &fusion.heuristic)?;
    let plan = build_plan(input.len(), decision.slow_motion, &fusion)?;
    let fused = apply_plan(&variants, &plan)?;

    let mut report = MetricsReport::new(input.name(), input.len(), input.scale());
    report.psnr_cap = cfg.psnr.cap;
    let notes = [
        (
            "decision",
            if decision.slow_motion {
                "slow_motion"
            } else {
                "fast_motion"
            }
            .to_string(),
        ),
        ("first_frame_source", plan.sources()[0].to_string()),
        ("plan", plan.summary()),
        ("gradient", format!("{:.6}", decision.gradient)),
        ("stride", decision.stride.to_string()),
        ("tau", format!("{:.6}", decision.tau)),
        ("normalized", decision.normalized.to_string()),
        (
            "polarity",
            if fusion.heuristic.slow_motion_when_gradient_at_least_tau {
                "gradient>=tau=>slow_motion"
            } else {
                "gradient<tau=>slow_motion"
            }
            .to_string(),
        ),
        ("fps", input.fps().to_string()),
        ("short_len", fusion.short_len.to_string()),
        ("intra_len", fusion.intra_len.to_string()),
        ("head_len", fusion.head_len.to_string()),
        ("enhancer_main", main_e.name().to_string()),
        ("enhancer_intra", intra_e.name().to_string()),
        ("tta", cfg.tta.enabled.to_string()),
    ];
    for (k, v) in notes {
        report.notes.insert(k.into(), v);
    }
    for (k, v) in [
        ("gradient", decision.gradient),
        ("tau", decision.tau),
        ("stride", decision.stride as f64),
        ("sampled_frames", decision.sampled_frames as f64),
        ("frames_intra", plan.count(Source::Intra) as f64),
        ("frames_short", plan.count(Source::Short) as f64),
        ("frames_full", plan.count(Source::Full) as f64),
    ] {
        report.aggregates.insert(k.into(), v);
    }
    report.series.insert(
        "source".into(),
        plan.sources()
            .iter()
            .map(|s| Some(s.code() as f64))
            .collect(),
    );
    if let Some(gt) = &gt {
        add_psnr(&mut report, "fused", &fused, gt, cfg)?;
        add_psnr(&mut report, "full", &variants.full, gt, cfg)?;
        add_psnr(&mut report, "short", &variants.short, gt, cfg)?;
        add_psnr(&mut report, "intra", &variants.intra, gt, cfg)?;
    }

    let mut staged = Staged::default();
    staged.add(output_path, &encode_video(&fused, output_path)?)?;
    let report_path = cfg
        .report_path
        .clone()
        .unwrap_or_else(|| default_report_path(output_path, report_format(cfg)));
    emit_report(&report, cfg, Some(&report_path), &mut staged)?;
    staged.commit()?;
    Ok(())
}

fn wrap<'a>(e: &'a dyn Enhancer, tta: Option<&TtaConfig>) -> Box<dyn Enhancer + 'a> {
    match tta {
        Some(t) => Box::new(TtaWrapped {
            inner: e,
            cfg: t.clone(),
            name: format!("tta({})", e.name()),
        }),
        None => Box::new(Passthrough(e)),
    }
}

struct Passthrough<'a>(&'a dyn Enhancer);

impl Enhancer for Passthrough<'_> {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn is_deterministic(&self) -> bool {
        self.0.is_deterministic()
    }

    fn enhance(&self, input: &VideoSequence) -> CoreResult<VideoSequence> {
        self.0.enhance(input)
    }
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let input = read_video(required(&cfg.input, "input")?, cfg)?;
    required(&cfg.gt, "gt")?;
    let gt = load_gt(cfg, &input)?.expect("gt checked above");
    let enhancer = cfg.enhancers.main.build()?;
    let mut trim = cfg.trim.clone();
    trim.psnr = cfg.psnr;
    let report = trim_analysis(&input, &gt, enhancer.as_ref(), &trim)?;
    let mut staged = Staged::default();
    let path = cfg.report_path.as_deref().or(cfg.output.as_deref());
    emit_report(&report, cfg, path, &mut staged)?;
    staged.commit()?;
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let input_path = required(&cfg.input, "input")?;
    let output_path = required(&cfg.output, "output")?;
    let input = read_video(input_path, cfg)?;
    let mut report = MetricsReport::new(input.name(), input.len(), input.scale());
    let degraded = match &cfg.encoder {
        Some(enc) => {
            let template = CommandTemplate::new(enc.command.clone()).map_err(CliError::config)?;
            report
                .notes
                .insert("encoder".into(), template.render(&enc.extra_args));
            encode_external(&input, &template, &enc.extra_args)?
        }
        None => {
            report
                .notes
                .insert("encoder".into(), "dct-simulator".into());
            report.notes.insert("seed".into(), cfg.seed.to_string());
            report.series.insert(
                "step".into(),
                (0..input.len())
                    .map(|i| Some(cfg.degradation.step_for(classify_frame(i, &cfg.gop))))
                    .collect(),
            );
            simulate_low_delay(&input, &cfg.gop, &cfg.degradation, cfg.seed)?
        }
    };
    report.series.insert(
        "intra".into(),
        (0..input.len())
            .map(|i| Some(f64::from(classify_frame(i, &cfg.gop) == FrameKind::Intra)))
            .collect(),
    );
    let psnr = psnr_sequence(&degraded, &input, &cfg.psnr)?;
    report
        .aggregates
        .insert("psnr_mean_vs_source".into(), psnr.aggregates["psnr_mean"]);
    report
        .series
        .insert("psnr_vs_source".into(), psnr.series["psnr"].clone());

    let mut staged = Staged::default();
    staged.add(output_path, &encode_video(&degraded, output_path)?)?;
    let report_path = cfg
        .report_path
        .clone()
        .unwrap_or_else(|| default_report_path(output_path, report_format(cfg)));
    emit_report(&report, cfg, Some(&report_path), &mut staged)?;
    staged.commit()?;
    Ok(())
}

pub fn cmd_segment(cfg: &RunConfig) -> Result<(), CliError> {
    let input_path = required(&cfg.input, "input")?;
    let out_dir = required(&cfg.output, "output")?;
    let input = read_video(input_path, cfg)?;
    let segments = segment_video(&input, cfg.segment.length)?;
    let ext = if is_raw(input_path) { "yuv" } else { "y4m" };
    let mut staged = Staged::default();
    for seg in &segments {
        let path = out_dir.join(format!("{}.{ext}", seg.name()));
        staged.add(&path, &encode_video(seg, &path)?)?;
    }
    staged.commit()?;
    Ok(())
}

pub fn cmd_metrics(cfg: &RunConfig) -> Result<(), CliError> {
    let input = read_video(required(&cfg.input, "input")?, cfg)?;
    required(&cfg.gt, "gt")?;
    let gt = load_gt(cfg, &input)?.expect("gt checked above");
    let mut report = psnr_sequence(&input, &gt, &cfg.psnr)?;
    if input.len() >= 2 {
        let loss = combined_loss(&input, &gt, &cfg.loss)?;
        for (k, v) in [
            ("loss_total", loss.total),
            ("loss_charbonnier", loss.components.charbonnier),
            ("loss_temporal_gradient", loss.components.temporal_gradient),
            ("loss_total_variation", loss.components.total_variation),
        ] {
            report.aggregates.insert(k.into(), v);
        }
    } else {
        report.notes.insert(
            "loss".into(),
            "skipped: temporal gradient needs at least 2 frames".into(),
        );
    }
    let mut staged = Staged::default();
    let path = cfg.report_path.as_deref().or(cfg.output.as_deref());
    emit_report(&report, cfg, path, &mut staged)?;
    staged.commit()?;
    Ok(())
}

pub fn cmd_tta(cfg: &RunConfig) -> Result<(), CliError> {
    let input_path = required(&cfg.input, "input")?;
    let output_path = required(&cfg.output, "output")?;
    let input = read_video(input_path, cfg)?;
    let gt = load_gt(cfg, &input)?;
    let enhancer = cfg.enhancers.main.build()?;
    let out = tta_enhance(&input, enhancer.as_ref(), &cfg.tta_config())?;

    let mut report = MetricsReport::new(input.name(), input.len(), input.scale());
    report.psnr_cap = cfg.psnr.cap;
    report
        .notes
        .insert("enhancer".into(), enhancer.name().to_string());
    report.notes.insert(
        "elements".into(),
        out.used
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    for (i, w) in out.warnings.iter().enumerate() {
        report.notes.insert(format!("warning_{i}"), w.clone());
    }
    if let Some(gt) = &gt {
        add_psnr(&mut report, "tta", &out.sequence, gt, cfg)?;
        add_psnr(&mut report, "input", &input, gt, cfg)?;
    }
    let mut staged = Staged::default();
    staged.add(output_path, &encode_video(&out.sequence, output_path)?)?;
    let report_path = cfg
        .report_path
        .clone()
        .unwrap_or_else(|| default_report_path(output_path, report_format(cfg)));
    emit_report(&report, cfg, Some(&report_path), &mut staged)?;
    staged.commit()?;
    Ok(())
}
