use std::fs;

use brightdyn::config::Settings;
use brightdyn::experiment::{
    read_record, run_conditions, write_record, Condition, ExperimentConfig, ExternalStimulus,
    RunRecord, StimulusId, PREDICTIONS_CSV,
};
use brightdyn::filterbank::OdogFilterBank;
use brightdyn::orientation::Stage;
use brightdyn::plot::{plot_orientation_profiles, plot_predictions};
use brightdyn::stimuli::LuminanceImage;

fn small_settings() -> Settings {
    let mut s = Settings::default();
    s.display.side = 256;
    s.grating.wide_stripe_width = 85;
    s.bank.n_scales = 4;
    s.pooling.window_extent = 64;
    s.pooling.observation_x = 128;
    s.pooling.observation_y = 192;
    s
}

fn run(condition: Condition, stimuli: &[&str], external: Vec<ExternalStimulus>) -> RunRecord {
    run_with(small_settings(), condition, stimuli, external)
}

/// Window at the display center, clear of the zero-padded border for every scale.
fn centered_settings() -> Settings {
    let mut s = small_settings();
    s.pooling.observation_y = 128;
    s
}

fn run_with(
    settings: Settings,
    condition: Condition,
    stimuli: &[&str],
    external: Vec<ExternalStimulus>,
) -> RunRecord {
    let bank = OdogFilterBank::new(settings.bank_params(), settings.display.side).unwrap();
    let mut cfg = ExperimentConfig::from_settings(condition, settings).unwrap();
    cfg.stimuli = stimuli
        .iter()
        .map(|s| s.parse::<StimulusId>().unwrap())
        .collect();
    cfg.external = external;
    run_conditions(&cfg, &[condition], &bank).unwrap().remove(0)
}

fn thin_set() -> Vec<&'static str> {
    vec!["thin-31-12", "thin-31-102", "thin-72-12", "thin-72-102"]
}

fn vertical_grating(period: usize) -> ExternalStimulus {
    let data = (0..256 * 256)
        .map(|i| {
            if (i % 256 / (period / 2)).is_multiple_of(2) {
                90.0
            } else {
                10.0
            }
        })
        .collect();
    ExternalStimulus {
        id: "vertical".into(),
        display: LuminanceImage::new(256, 256, data).unwrap(),
    }
}

#[test]
fn thin_set_counts_and_gaps() {
    let rec = run(Condition::I, &thin_set(), vec![]);
    assert_eq!(rec.rows.len(), 8);
    assert_eq!(rec.gaps.len(), 4);
    for g in &rec.gaps {
        let a = rec.peak(g.stage, &g.stimulus_a).unwrap();
        let b = rec.peak(g.stage, &g.stimulus_b).unwrap();
        assert_eq!(g.gap, a - b);
        assert!(g.stimulus_a.ends_with("-12") && g.stimulus_b.ends_with("-102"));
    }
    for r in &rec.rows {
        assert_eq!(r.result.observation, (128, 192));
        assert_eq!(r.result.profile.len(), 12);
    }
    assert_eq!(rec.baselines.len(), 4);
}

#[test]
fn csv_is_deterministic_and_reads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(
        Condition::III,
        &["thin-72-12", "white-on-black", "white-on-white"],
        vec![],
    );
    write_record(&rec, &dir.path().join("a")).unwrap();
    let again = run(
        Condition::III,
        &["white-on-white", "thin-72-12", "white-on-black"],
        vec![],
    );
    write_record(&again, &dir.path().join("b")).unwrap();
    for name in ["predictions.csv", "gaps.csv", "profiles.csv", "config.toml"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }

    let text = fs::read_to_string(dir.path().join("a").join(PREDICTIONS_CSV)).unwrap();
    let header = text.lines().next().unwrap();
    let angles: Vec<String> = (0..12).map(|i| format!("A_{}", i * 15)).collect();
    assert_eq!(
        header,
        format!(
            "condition,stage,stimulus_id,observation_x,observation_y,peak,argpeak_deg,{}",
            angles.join(",")
        )
    );
    let ids: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("III,58ms,thin-72-12,128,144,"));

    let back = read_record(&dir.path().join("a")).unwrap();
    assert_eq!(back.condition, Condition::III);
    assert_eq!(back.stages, vec![Stage::T1, Stage::T2]);
    for r in &rec.rows {
        let b = back.row(r.result.stage, &r.stimulus_id).unwrap();
        assert_eq!(b.result, r.result);
    }
    assert_eq!(back.gaps, rec.gaps);
    assert_eq!(back.config_snapshot, rec.config_snapshot);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let rec = run(Condition::I, &["thin-31-12"], vec![]);
    assert!(write_record(&rec, &blocker.join("sub")).is_err());
}

#[test]
fn prediction_chart_mirrors_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(Condition::I, &thin_set(), vec![]);
    let paths = plot_predictions(&rec, dir.path()).unwrap();
    assert_eq!(paths.len(), 1);
    let svg = fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
    // Dotted lines for the 31 target, diamonds for the 102 inducer.
    assert_eq!(svg.matches("stroke-dasharray").count(), 2 + 2);
    for r in &rec.rows {
        let needle = format!(
            r#"data-series="{}" data-peak="{}""#,
            r.stimulus_id, r.result.peak
        );
        assert!(svg.contains(&needle), "{needle}");
    }
    let peaks: Vec<f64> = svg
        .split(r#"data-peak=""#)
        .skip(1)
        .map(|s| s[..s.find('"').unwrap()].parse().unwrap())
        .collect();
    assert_eq!(peaks.len(), 8);
    for p in peaks {
        assert!(rec.rows.iter().any(|r| r.result.peak == p));
    }
}

#[test]
fn empty_stage_list_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut rec = run(Condition::I, &["thin-31-12"], vec![]);
    rec.stages.clear();
    rec.rows.clear();
    assert!(plot_predictions(&rec, dir.path()).unwrap().is_empty());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn uniform_display_gives_flat_zero_curves() {
    let display = LuminanceImage::uniform(256, 256, 50.0).unwrap();
    let rec = run_with(
        centered_settings(),
        Condition::I,
        &[],
        vec![ExternalStimulus {
            id: "uniform".into(),
            display,
        }],
    );
    let dir = tempfile::tempdir().unwrap();
    let paths = plot_orientation_profiles(&rec, dir.path()).unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(
        fs::read_to_string(&paths[0])
            .unwrap()
            .matches("<polyline")
            .count(),
        3
    );
    let base = rec.baseline("uniform").unwrap();
    let curves = [
        base.combined.profile.values(),
        rec.row(Stage::T1, "uniform")
            .unwrap()
            .result
            .profile
            .values(),
        rec.row(Stage::T2, "uniform")
            .unwrap()
            .result
            .profile
            .values(),
    ];
    for c in curves {
        assert!(c.iter().all(|v| v.abs() < 1e-9 * 50.0), "{c:?}");
    }
}

#[test]
fn t1_sharpens_an_oriented_stimulus() {
    let rec = run_with(
        centered_settings(),
        Condition::I,
        &[],
        vec![vertical_grating(24)],
    );
    let base = &rec.baseline("vertical").unwrap().combined;
    let t1 = &rec.row(Stage::T1, "vertical").unwrap().result;
    assert_eq!(base.argpeak_deg, 0.0, "{:?}", base.profile.values());
    assert_eq!(t1.argpeak_deg, 0.0);
    assert!(t1.peak > base.peak);
}

#[test]
fn t2_shifts_response_toward_the_orthogonal_orientation() {
    let rec = run_with(
        centered_settings(),
        Condition::I,
        &[],
        vec![vertical_grating(24)],
    );
    let base = rec
        .baseline("vertical")
        .unwrap()
        .combined
        .profile
        .values()
        .to_vec();
    let t2 = rec
        .row(Stage::T2, "vertical")
        .unwrap()
        .result
        .profile
        .values()
        .to_vec();
    assert!(t2[0] < base[0]);
    assert!(t2[6] > base[6]);
}

#[test]
fn strong_t2_feedback_moves_the_peak_to_the_orthogonal_band() {
    // The pooled profile of a grating is close to a + b·cos 2θ. T2 feedback
    // scales the cos 2θ term by η - α(E₁ + I₁), where E₁ and I₁ are the
    // first circular harmonics of the two lobes; the peak flips once that
    // factor turns negative (α > 1.26 for unit η). Higher harmonics can move
    // the maximum one step off 90°.
    let mut settings = centered_settings();
    settings.stage.t2.alpha = brightdyn::config::PerScale::Scalar(3.0);
    let rec = run_with(settings, Condition::I, &[], vec![vertical_grating(24)]);
    let t1 = &rec.row(Stage::T1, "vertical").unwrap().result;
    let t2 = &rec.row(Stage::T2, "vertical").unwrap().result;
    assert_eq!(t1.argpeak_deg, 0.0);
    assert!(
        (t2.argpeak_deg - 90.0).abs() <= 15.0,
        "{:?}",
        t2.profile.values()
    );
    let v = t2.profile.values();
    assert!(v[6] > v[0].abs());
}

#[test]
fn scaling_luminance_scales_every_peak() {
    let settings = small_settings();
    let bank = OdogFilterBank::new(settings.bank_params(), 256).unwrap();
    let mut cfg = ExperimentConfig::from_settings(Condition::II, settings.clone()).unwrap();
    cfg.stimuli = vec![
        "wide-72-102".parse().unwrap(),
        "white-on-white".parse().unwrap(),
    ];
    let a = run_conditions(&cfg, &[Condition::II], &bank)
        .unwrap()
        .remove(0);
    cfg.settings = settings.with_luminance_scale(2.0);
    let b = run_conditions(&cfg, &[Condition::II], &bank)
        .unwrap()
        .remove(0);
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        let rel = (rb.result.peak - 2.0 * ra.result.peak).abs() / ra.result.peak.abs();
        assert!(rel < 1e-9, "{rel}");
        assert_eq!(ra.result.argpeak_deg, rb.result.argpeak_deg);
    }
}
