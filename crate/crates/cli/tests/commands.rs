use std::path::Path;
use std::process::Command;

use mlcrf::commands::*;
use mlcrf::dataset::{Dataset, DepthSource};
use mlcrf::gridsearch::ParameterGrid;
use mlcrf::manifest::RegionManifest;
use mlcrf::pipeline::{propose_regions, scene_argmax};
use mlcrf::synth::{generate, SynthParams};
use mlcrf::{PipelineError, RunConfig};
use mlcrf_core::imagedata::{
    read_array, read_png_mask, write_array, write_color_png, write_mask_png, ColorField, LabelField, LogitField,
    PortableArray,
};
use mlcrf_core::metrics::ConfusionCounts;
use mlcrf_core::proposer::propose;
use mlcrf_core::unary::softmax;

fn write_scene(root: &Path, id: &str, logits: &LogitField) {
    let ds = Dataset::new(root);
    for d in ["color", "scene_logits"] {
        std::fs::create_dir_all(root.join(d)).unwrap();
    }
    let (w, h) = (logits.width(), logits.height());
    let color = ColorField::new(w, h, (0..w * h * 3).map(|i| (i * 7 % 251) as u8).collect()).unwrap();
    write_color_png(&color, ds.color_path(id)).unwrap();
    write_array(&PortableArray::from(logits), ds.scene_logits_path(id)).unwrap();
}

fn blob_logits(w: usize, h: usize, blob: (usize, usize, usize, usize)) -> LogitField {
    let (top, left, bh, bw) = blob;
    let mut data = Vec::with_capacity(w * h * 2);
    for r in 0..h {
        for c in 0..w {
            let inside = (top..top + bh).contains(&r) && (left..left + bw).contains(&c);
            data.extend(if inside { [0.0, 3.0] } else { [3.0, 0.0] });
        }
    }
    LogitField::new(w, h, 2, data).unwrap()
}

fn propose_args(root: &Path) -> ProposeArgs {
    ProposeArgs {
        data: root.to_path_buf(),
        out: root.to_path_buf(),
        depth: DepthSource::Dataset,
        fine_logits: None,
    }
}

fn refine_args(root: &Path, out: &Path) -> RefineArgs {
    RefineArgs {
        data: root.to_path_buf(),
        manifests: None,
        out: out.to_path_buf(),
        depth: DepthSource::Dataset,
        energy: false,
    }
}

#[test]
fn background_logits_give_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), "a", &LogitField::new(40, 30, 2, [2.0, -1.0].repeat(1200)).unwrap());
    let manifests = cmd_propose(&propose_args(dir.path()), &RunConfig::default()).unwrap();
    assert_eq!(manifests.len(), 1);
    assert!(manifests[0].regions.is_empty());
}

#[test]
fn one_blob_gives_the_proposer_output_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let logits = blob_logits(120, 100, (30, 40, 25, 30));
    write_scene(dir.path(), "a", &logits);
    let cfg = RunConfig::default();
    let manifests = cmd_propose(&propose_args(dir.path()), &cfg).unwrap();
    let expected = propose(&softmax(&logits).unwrap().argmax(), &cfg.proposer).unwrap();
    assert_eq!(expected.len(), 1);
    let r = &manifests[0].regions[0];
    let p = &expected[0];
    assert_eq!((r.top, r.left, r.height, r.width), (p.top, p.left, p.height, p.width));
    // 25x30 component grows by 8 and 9 pixels per side
    assert_eq!((r.top, r.left, r.height, r.width), (22, 31, 41, 48));

    let path = dir.path().join("manifests/a.json");
    let first = std::fs::read(&path).unwrap();
    cmd_propose(&propose_args(dir.path()), &cfg).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
    assert!(dir.path().join("crops/a_r0_color.png").is_file());
}

#[test]
fn refine_without_regions_or_pairwise_returns_the_scene_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng_state = 17u64;
    let mut next = || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((rng_state >> 33) as f64 / (1u64 << 31) as f64) * 4.0 - 2.0
    };
    let logits = LogitField::new(20, 16, 2, (0..20 * 16 * 2).map(|_| next()).collect()).unwrap();
    write_scene(dir.path(), "a", &logits);
    let mut cfg = RunConfig::default();
    cfg.crf = cfg.crf.without_pairwise();
    cmd_propose(&propose_args(dir.path()), &cfg).unwrap();
    let out = dir.path().join("out");
    let reports = cmd_refine(&refine_args(dir.path(), &out), &cfg).unwrap();
    assert_eq!(reports[0].regions, 0);
    // depth absent: appearance and smoothing only
    assert_eq!(reports[0].kernels, 2);
    let mask = read_png_mask(out.join("masks/a.png")).unwrap();
    assert_eq!(mask, scene_argmax(&logits).unwrap());
    let q = read_array(out.join("marginals/a.mlf")).unwrap().into_probabilities().unwrap();
    assert_eq!((q.width(), q.height(), q.classes()), (20, 16, 2));
}

#[test]
fn stale_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), "a", &blob_logits(120, 100, (30, 40, 25, 30)));
    let cfg = RunConfig::default();
    cmd_propose(&propose_args(dir.path()), &cfg).unwrap();
    let path = dir.path().join("manifests/a.json");
    let mut m = RegionManifest::read(&path).unwrap();
    m.regions[0].left += 1;
    m.write(&path).unwrap();
    let err = cmd_refine(&refine_args(dir.path(), &dir.path().join("out")), &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::StaleManifest { .. }), "{err}");

    // the scene logits changed after proposing
    cmd_propose(&propose_args(dir.path()), &cfg).unwrap();
    write_scene(dir.path(), "a", &blob_logits(120, 100, (30, 40, 26, 30)));
    let err = cmd_refine(&refine_args(dir.path(), &dir.path().join("out")), &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::StaleManifest { .. }), "{err}");
}

#[test]
fn missing_region_logits_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), "a", &blob_logits(120, 100, (30, 40, 25, 30)));
    let cfg = RunConfig::default();
    cmd_propose(&propose_args(dir.path()), &cfg).unwrap();
    let err = cmd_refine(&refine_args(dir.path(), &dir.path().join("out")), &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::MissingRegionLogits { path: None, .. }), "{err}");

    let path = dir.path().join("manifests/a.json");
    let mut m = RegionManifest::read(&path).unwrap();
    m.regions[0].logits = Some("../regions/nowhere.mlf".into());
    m.write(&path).unwrap();
    let err = cmd_refine(&refine_args(dir.path(), &dir.path().join("out")), &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::MissingRegionLogits { path: Some(_), .. }), "{err}");
}

fn write_masks(dir: &Path, masks: &[(&str, Vec<u8>)]) {
    std::fs::create_dir_all(dir).unwrap();
    for (id, data) in masks {
        write_mask_png(&LabelField::binary(data.len(), 1, data.clone()).unwrap(), dir.join(format!("{id}.png")))
            .unwrap();
    }
}

#[test]
fn evaluate_against_itself_and_known_counts() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth");
    write_masks(&truth, &[("a", vec![1; 8].into_iter().chain([0, 0, 1, 1]).collect()), ("b", vec![0, 1])]);
    let e = cmd_evaluate(&truth, &truth).unwrap();
    let m = e.metrics;
    assert_eq!((m.iou, m.miou, m.prec, m.mean), (1.0, 1.0, 1.0, 1.0));

    let (p, t) = (dir.path().join("p1"), dir.path().join("t1"));
    write_masks(&p, &[("x", [vec![1; 8], vec![1; 2], vec![0; 2]].concat())]);
    write_masks(&t, &[("x", [vec![1; 8], vec![0; 2], vec![1; 2]].concat())]);
    let e = cmd_evaluate(&p, &t).unwrap();
    assert_eq!((e.counts.tp[1], e.counts.fp[1], e.counts.fn_[1]), (8, 2, 2));
    assert!((e.metrics.iou - 0.6667).abs() < 1e-4);
    assert_eq!(e.images, 1);
}

#[test]
fn evaluate_refuses_different_id_sets_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let (p, t) = (dir.path().join("p"), dir.path().join("t"));
    write_masks(&p, &[("a", vec![0, 1])]);
    write_masks(&t, &[("b", vec![0, 1])]);
    assert!(matches!(cmd_evaluate(&p, &t), Err(PipelineError::IdMismatch(_))));

    let out = dir.path().join("report");
    let status = Command::new(env!("CARGO_BIN_EXE_mlcrf"))
        .args(["evaluate", "--pred", p.to_str().unwrap(), "--truth", t.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(!out.exists());
}

fn synth_set(root: &Path, params: &SynthParams, cfg: &RunConfig) {
    cmd_synth(params, root, cfg).unwrap();
}

#[test]
fn single_point_grid_reports_its_measured_iou() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let params = SynthParams {
        seed: 31,
        count: 2,
        size: 48,
        ..SynthParams::default()
    };
    synth_set(dir.path(), &params, &cfg);
    let args = GridArgs {
        data: dir.path().to_path_buf(),
        manifests: None,
        depth: DepthSource::Dataset,
        grid: ParameterGrid::parse("w_smooth = 2").unwrap(),
    };
    let result = cmd_gridsearch(&args, &cfg).unwrap();
    assert_eq!(result.rows.len(), 1);
    assert_eq!(result.best, 0);
    assert_eq!(result.best_config.crf.w_smooth, 2.0);
    let out = dir.path().join("refined");
    cmd_refine(&refine_args(dir.path(), &out), &result.best_config).unwrap();
    let e = cmd_evaluate(&out.join("masks"), &dir.path().join("truth")).unwrap();
    assert_eq!(e.metrics.iou, result.rows[0].metrics.iou);
}

#[test]
fn grid_search_prefers_the_appearance_kernel_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let params = SynthParams {
        seed: 32,
        count: 4,
        size: 64,
        ..SynthParams::default()
    };
    synth_set(dir.path(), &params, &cfg);
    let args = GridArgs {
        data: dir.path().to_path_buf(),
        manifests: None,
        depth: DepthSource::Dataset,
        grid: ParameterGrid::parse("w_appearance = 0, 3").unwrap(),
    };
    let result = cmd_gridsearch(&args, &cfg).unwrap();
    assert_eq!(result.rows.len(), 2);
    assert_eq!(result.best_config.crf.w_appearance, 3.0, "{}", result.to_table());
}

#[test]
fn noise_free_scenes_refine_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let params = SynthParams {
        seed: 33,
        count: 4,
        size: 64,
        noise: 0.0,
        ..SynthParams::default()
    };
    synth_set(dir.path(), &params, &cfg);
    let ds = Dataset::new(dir.path());
    for id in ds.ids().unwrap() {
        assert_eq!(scene_argmax(&ds.scene_logits(&id).unwrap()).unwrap(), ds.truth(&id).unwrap());
    }
    let out = dir.path().join("refined");
    cmd_refine(&refine_args(dir.path(), &out), &cfg).unwrap();
    let e = cmd_evaluate(&out.join("masks"), &dir.path().join("truth")).unwrap();
    assert_eq!(e.metrics.iou, 1.0);
}

#[test]
fn region_evidence_beats_scene_evidence_inside_regions() {
    let cfg = RunConfig::default();
    let params = SynthParams::default();
    let (mut scene, mut region, mut whole) = (ConfusionCounts::new(2), ConfusionCounts::new(2), ConfusionCounts::new(2));
    for i in 0..10 {
        let s = generate(&params, i).unwrap();
        let scene_labels = scene_argmax(&s.scene_logits).unwrap();
        whole.accumulate(&scene_labels, &s.truth).unwrap();
        for p in propose_regions(&s.scene_logits, &cfg.proposer).unwrap() {
            let crop = |l: &LabelField| {
                let data = (p.top..p.top + p.height)
                    .flat_map(|r| (p.left..p.left + p.width).map(move |c| (r, c)))
                    .map(|(r, c)| l.get(r, c))
                    .collect();
                LabelField::binary(p.width, p.height, data).unwrap()
            };
            let fine = mlcrf::synth::fine_model_standin(&s.fine_logits, &p).unwrap();
            let fine = mlcrf_core::unary::resample_bilinear(&softmax(&fine).unwrap(), p.width, p.height)
                .unwrap()
                .argmax();
            scene.accumulate(&crop(&scene_labels), &crop(&s.truth)).unwrap();
            region.accumulate(&fine, &crop(&s.truth)).unwrap();
        }
    }
    assert!(whole.iou(1) < 1.0);
    assert!(scene.iou(1) < region.iou(1), "{} vs {}", scene.iou(1), region.iou(1));
}

#[test]
fn small_synthetic_scenes_rarely_get_worse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let params = SynthParams {
        seed: 34,
        count: 20,
        size: 32,
        ..SynthParams::default()
    };
    synth_set(dir.path(), &params, &cfg);
    let out = dir.path().join("refined");
    cmd_refine(&refine_args(dir.path(), &out), &cfg).unwrap();
    let ds = Dataset::new(dir.path());
    let mut held = 0;
    for id in ds.ids().unwrap() {
        let truth = ds.truth(&id).unwrap();
        let iou = |l: &LabelField| {
            let mut c = ConfusionCounts::new(2);
            c.accumulate(l, &truth).unwrap();
            c.iou(1)
        };
        let refined = read_png_mask(out.join("masks").join(format!("{id}.png"))).unwrap();
        if iou(&refined) >= iou(&scene_argmax(&ds.scene_logits(&id).unwrap()).unwrap()) {
            held += 1;
        }
    }
    assert!(held >= 18, "{held}/20");
}

#[test]
fn cli_runs_the_two_phases_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_mlcrf");
    let data = dir.path().join("data");
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, format!("preset = mju-waste\ndataset_root = {}\nw_smooth = 2\n", data.display())).unwrap();
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();

    let out = run(&["synth", "--count", "2", "--size", "48", "--seed", "5", "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["propose", "--config", conf.to_str().unwrap(), "--fine-logits", data.join("fine_logits").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let refined = dir.path().join("refined");
    let out = run(&["refine", "--config", conf.to_str().unwrap(), "--depth", "none", "--verbose", "--out", refined.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("2 kernels, energy"), "{stdout}");
    let out = run(&["evaluate", "--pred", refined.join("masks").to_str().unwrap(), "--truth", data.join("truth").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mIoU"));

    let bad = run(&["refine", "--preset", "coco", "--out", refined.to_str().unwrap()]);
    assert!(!bad.status.success());
}
