//! Experiment matrix: the ten standard stimuli, the three analysis
//! conditions, paired illusion-strength gaps and CSV tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, Settings};
use crate::filterbank::{FilterError, OdogFilterBank};
use crate::orientation::{FeedbackCoefficients, OrientationProfile, Stage};
use crate::pooling::{
    pool_requests, Combined, ModelConfig, PoolRequest, PoolingError, PredictionResult,
    ScaleSelection, WindowRule,
};
use crate::stimuli::{
    compose_display, make_square_grating, make_white_stimulus, GratingSpec, LuminanceImage,
    Placement, StimulusError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown stimulus id `{0}`")]
    UnknownStimulus(String),
    #[error("unknown condition `{0}` (expected I, II or III)")]
    UnknownCondition(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed table {path}: {message}")]
    Table { path: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Pooling(#[from] PoolingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// All scales, fixed window at mid-stimulus.
    I,
    /// As I at T1; the three coarsest scales at T2.
    II,
    /// As I with the window moved next to the black/stimulus interface.
    III,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::I, Condition::II, Condition::III];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::I => "I",
            Condition::II => "II",
            Condition::III => "III",
        })
    }
}

impl FromStr for Condition {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Condition::I),
            "II" | "2" => Ok(Condition::II),
            "III" | "3" => Ok(Condition::III),
            _ => Err(ExperimentError::UnknownCondition(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Thin,
    Wide,
    White,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Thin => "thin",
            Family::Wide => "wide",
            Family::White => "white",
        }
    }
}

/// One of the ten standard stimuli.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StimulusId {
    Grating {
        family: Family,
        target: u32,
        inducer: u32,
    },
    White(Placement),
}

pub const TARGET_LUMINANCES: [u32; 2] = [31, 72];
pub const INDUCER_LUMINANCES: [u32; 2] = [12, 102];

impl StimulusId {
    pub fn all() -> Vec<StimulusId> {
        let mut out = Vec::with_capacity(10);
        for family in [Family::Thin, Family::Wide] {
            for target in TARGET_LUMINANCES {
                for inducer in INDUCER_LUMINANCES {
                    out.push(StimulusId::Grating {
                        family,
                        target,
                        inducer,
                    });
                }
            }
        }
        out.push(StimulusId::White(Placement::OnBlack));
        out.push(StimulusId::White(Placement::OnWhite));
        out
    }

    pub fn family(&self) -> Family {
        match self {
            StimulusId::Grating { family, .. } => *family,
            StimulusId::White(_) => Family::White,
        }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    /// The stimulus half of the display, `side` wide and `side - side/2` tall.
    pub fn render(&self, settings: &Settings) -> Result<LuminanceImage, StimulusError> {
        let side = settings.display.side;
        let h = side - side / 2;
        let image = match *self {
            StimulusId::Grating {
                family,
                target,
                inducer,
            } => {
                let stripe_width = match family {
                    Family::Wide => settings.grating.wide_stripe_width,
                    _ => settings.grating.thin_stripe_width,
                };
                let spec = GratingSpec {
                    stripe_width,
                    target_luminance: f64::from(target),
                    inducer_luminance: f64::from(inducer),
                    phase: GratingSpec::phase_for_target_at(
                        stripe_width,
                        settings.pooling.observation_x,
                    ),
                };
                make_square_grating(&spec, side, h)?
            }
            StimulusId::White(p) => make_white_stimulus(&settings.white.spec(p), side, h)?,
        };
        image.scaled(settings.display.luminance_scale)
    }

    /// Full display: black upper half over the stimulus.
    pub fn display(&self, settings: &Settings) -> Result<LuminanceImage, StimulusError> {
        compose_display(
            &self.render(settings)?,
            settings.display.side,
            settings.display.black_luminance * settings.display.luminance_scale,
        )
    }
}

impl fmt::Display for StimulusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StimulusId::Grating {
                family,
                target,
                inducer,
            } => write!(f, "{}-{target}-{inducer}", family.name()),
            StimulusId::White(Placement::OnBlack) => f.write_str("white-on-black"),
            StimulusId::White(Placement::OnWhite) => f.write_str("white-on-white"),
        }
    }
}

impl FromStr for StimulusId {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StimulusId::all()
            .into_iter()
            .find(|id| id.id() == s.trim())
            .ok_or_else(|| ExperimentError::UnknownStimulus(s.to_string()))
    }
}

/// A display supplied from outside the standard set.
#[derive(Debug, Clone)]
pub struct ExternalStimulus {
    pub id: String,
    pub display: LuminanceImage,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub condition: Condition,
    pub stages: Vec<Stage>,
    pub stimuli: Vec<StimulusId>,
    pub external: Vec<ExternalStimulus>,
    pub settings: Settings,
}

impl ExperimentConfig {
    /// Stages and stimuli taken from the settings' `[experiment]` section.
    pub fn from_settings(
        condition: Condition,
        settings: Settings,
    ) -> Result<Self, ExperimentError> {
        let stages = settings.stages()?;
        let stimuli = if settings.experiment.stimuli.is_empty() {
            StimulusId::all()
        } else {
            settings
                .experiment
                .stimuli
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(Self {
            condition,
            stages,
            stimuli,
            external: Vec::new(),
            settings,
        })
    }
}

/// Scale selection and observation point for one condition and stage.
pub fn stage_plan(
    condition: Condition,
    stage: Stage,
    settings: &Settings,
) -> (ScaleSelection, (usize, usize)) {
    let n = settings.bank.n_scales;
    let fixed = WindowRule::Fixed {
        extent: settings.pooling.window_extent,
    };
    let mid = (
        settings.pooling.observation_x,
        settings.pooling.observation_y,
    );
    match (condition, stage) {
        (Condition::II, Stage::T2) => (
            ScaleSelection::largest(n, 3, WindowRule::SmallestOfSelected),
            mid,
        ),
        (Condition::III, _) => (
            ScaleSelection::all(n, fixed),
            (
                settings.pooling.observation_x,
                settings.display.side / 2 + settings.pooling.interface_offset,
            ),
        ),
        _ => (ScaleSelection::all(n, fixed), mid),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub condition: Condition,
    pub stimulus_id: String,
    pub result: PredictionResult,
}

/// `gap = peak_a - peak_b` for a matched pair within one condition and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub condition: Condition,
    pub stage: Stage,
    pub stimulus_a: String,
    pub stimulus_b: String,
    pub peak_a: f64,
    pub peak_b: f64,
    pub gap: f64,
}

/// Combined profile with feedback switched off (α = 0, η = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub condition: Condition,
    pub stimulus_id: String,
    pub combined: Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub condition: Condition,
    pub config_snapshot: String,
    pub stages: Vec<Stage>,
    pub rows: Vec<PredictionRow>,
    pub gaps: Vec<GapRow>,
    pub baselines: Vec<BaselineRow>,
}

impl RunRecord {
    pub fn row(&self, stage: Stage, stimulus_id: &str) -> Option<&PredictionRow> {
        self.rows
            .iter()
            .find(|r| r.result.stage == stage && r.stimulus_id == stimulus_id)
    }

    pub fn peak(&self, stage: Stage, stimulus_id: &str) -> Option<f64> {
        self.row(stage, stimulus_id).map(|r| r.result.peak)
    }

    pub fn gap(&self, stage: Stage, stimulus_a: &str, stimulus_b: &str) -> Option<&GapRow> {
        self.gaps
            .iter()
            .find(|g| g.stage == stage && g.stimulus_a == stimulus_a && g.stimulus_b == stimulus_b)
    }

    pub fn baseline(&self, stimulus_id: &str) -> Option<&BaselineRow> {
        self.baselines.iter().find(|b| b.stimulus_id == stimulus_id)
    }
}

/// Matched pairs `(a, b)`: same target with inducer 12 vs 102, and White's
/// patch on white vs on black.
pub fn gap_pairs() -> Vec<(StimulusId, StimulusId)> {
    let mut out = Vec::new();
    for family in [Family::Thin, Family::Wide] {
        for target in TARGET_LUMINANCES {
            let g = |inducer| StimulusId::Grating {
                family,
                target,
                inducer,
            };
            out.push((g(12), g(102)));
        }
    }
    out.push((
        StimulusId::White(Placement::OnWhite),
        StimulusId::White(Placement::OnBlack),
    ));
    out
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    let bank = OdogFilterBank::new(config.settings.bank_params(), config.settings.display.side)?;
    let mut records = run_conditions(config, &[config.condition], &bank)?;
    Ok(records.remove(0))
}

/// Runs several conditions over the same displays, filtering each display once.
///
/// `config.condition` is ignored; one record is returned per entry of `conditions`.
pub fn run_conditions(
    config: &ExperimentConfig,
    conditions: &[Condition],
    bank: &OdogFilterBank,
) -> Result<Vec<RunRecord>, ExperimentError> {
    let settings = &config.settings;
    let model = settings.model()?;
    let snapshot = settings.to_toml()?;

    let mut displays: Vec<(String, LuminanceImage)> = Vec::new();
    for id in &config.stimuli {
        displays.push((id.id(), id.display(settings)?));
    }
    for e in &config.external {
        displays.push((e.id.clone(), e.display.clone()));
    }
    displays.sort_by(|a, b| a.0.cmp(&b.0));
    displays.dedup_by(|a, b| a.0 == b.0);

    // Every (condition, stage) plan plus the no-feedback baseline, which uses
    // the condition's T1 plan.
    let mut plans: Vec<Plan> = Vec::new();
    for &c in conditions {
        for &s in &config.stages {
            let (sel, obs) = stage_plan(c, s, settings);
            plans.push((c, Some(s), sel, obs));
        }
        let (sel, obs) = stage_plan(c, Stage::T1, settings);
        plans.push((c, None, sel, obs));
    }
    let mut requests: Vec<PoolRequest> = Vec::new();
    let mut request_index: Vec<Vec<Option<usize>>> = Vec::new();
    for (_, _, sel, obs) in &plans {
        let mut idx = vec![None; bank.n_scales()];
        for &j in &sel.scales {
            let req = PoolRequest {
                scale: j,
                window: sel.window_for(j, bank, *obs)?,
            };
            let pos = match requests.iter().position(|r| *r == req) {
                Some(p) => p,
                None => {
                    requests.push(req);
                    requests.len() - 1
                }
            };
            *idx.get_mut(j).ok_or(PoolingError::MissingScale(j))? = Some(pos);
        }
        request_index.push(idx);
    }

    let per_display = displays
        .par_iter()
        .map(|(id, display)| {
            log::info!("filtering {id}");
            let pooled = pool_requests(display, bank, &requests)?;
            plans
                .iter()
                .zip(&request_index)
                .map(|((_, stage, sel, _), idx)| {
                    let profiles: Vec<Option<OrientationProfile>> =
                        idx.iter().map(|i| i.map(|i| pooled[i].clone())).collect();
                    combine(&model, bank, &profiles, *stage, sel)
                })
                .collect::<Result<Vec<_>, ExperimentError>>()
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let mut records = Vec::with_capacity(conditions.len());
    for &c in conditions {
        let mut rows = Vec::new();
        let mut baselines = Vec::new();
        for ((id, _), combined) in displays.iter().zip(&per_display) {
            for ((pc, stage, _, obs), comb) in plans.iter().zip(combined) {
                if *pc != c {
                    continue;
                }
                match stage {
                    Some(s) => rows.push(PredictionRow {
                        condition: c,
                        stimulus_id: id.clone(),
                        result: PredictionResult::new(*s, *obs, comb.clone()),
                    }),
                    None => baselines.push(BaselineRow {
                        condition: c,
                        stimulus_id: id.clone(),
                        combined: comb.clone(),
                    }),
                }
            }
        }
        let mut record = RunRecord {
            condition: c,
            config_snapshot: snapshot.clone(),
            stages: config.stages.clone(),
            rows,
            gaps: Vec::new(),
            baselines,
        };
        record.gaps = compute_gaps(&record);
        records.push(record);
    }
    Ok(records)
}

/// Condition, stage (`None` for the no-feedback baseline), selection, observation.
type Plan = (Condition, Option<Stage>, ScaleSelection, (usize, usize));

fn combine(
    model: &ModelConfig,
    bank: &OdogFilterBank,
    profiles: &[Option<OrientationProfile>],
    stage: Option<Stage>,
    selection: &ScaleSelection,
) -> Result<Combined, ExperimentError> {
    Ok(match stage {
        Some(s) => model.combine_pooled(profiles, bank, s, selection, None)?,
        None => {
            let off = FeedbackCoefficients::disabled(bank.n_scales());
            model.combine_pooled(profiles, bank, Stage::T1, selection, Some(&off))?
        }
    })
}

/// Gap rows for every matched pair with both members present.
pub fn compute_gaps(record: &RunRecord) -> Vec<GapRow> {
    let mut out = Vec::new();
    for (a, b) in gap_pairs() {
        for &stage in &record.stages {
            let (ida, idb) = (a.id(), b.id());
            if let (Some(pa), Some(pb)) = (record.peak(stage, &ida), record.peak(stage, &idb)) {
                out.push(GapRow {
                    condition: record.condition,
                    stage,
                    stimulus_a: ida,
                    stimulus_b: idb,
                    peak_a: pa,
                    peak_b: pb,
                    gap: pa - pb,
                });
            }
        }
    }
    out
}

pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const GAPS_CSV: &str = "gaps.csv";
pub const PROFILES_CSV: &str = "profiles.csv";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

fn angle_headers(n: usize) -> Vec<String> {
    let step = 180.0 / n as f64;
    (0..n).map(|i| format!("A_{}", i as f64 * step)).collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Write {
        path: path.display().to_string(),
        source,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ExperimentError> {
    let file = fs::File::create(path).map_err(write_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes the record's tables into `dir` and returns their paths.
pub fn write_record(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(write_err(dir))?;
    let n = record
        .rows
        .first()
        .map(|r| r.result.profile.len())
        .or_else(|| record.baselines.first().map(|b| b.combined.profile.len()))
        .unwrap_or(12);

    let pred_path = dir.join(PREDICTIONS_CSV);
    let mut w = csv_writer(&pred_path)?;
    let mut header: Vec<String> = [
        "condition",
        "stage",
        "stimulus_id",
        "observation_x",
        "observation_y",
        "peak",
        "argpeak_deg",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(angle_headers(n));
    w.write_record(&header)?;
    let mut rows: Vec<&PredictionRow> = record.rows.iter().collect();
    rows.sort_by(|a, b| (&a.stimulus_id, a.result.stage).cmp(&(&b.stimulus_id, b.result.stage)));
    for r in rows {
        let mut line = vec![
            r.condition.to_string(),
            r.result.stage.label().to_string(),
            r.stimulus_id.clone(),
            r.result.observation.0.to_string(),
            r.result.observation.1.to_string(),
            num(r.result.peak),
            num(r.result.argpeak_deg),
        ];
        line.extend(r.result.profile.values().iter().map(|&v| num(v)));
        w.write_record(&line)?;
    }
    w.flush().map_err(write_err(&pred_path))?;

    let gap_path = dir.join(GAPS_CSV);
    let mut w = csv_writer(&gap_path)?;
    w.write_record([
        "condition",
        "stage",
        "stimulus_a",
        "stimulus_b",
        "peak_a",
        "peak_b",
        "gap",
    ])?;
    for g in &record.gaps {
        w.write_record([
            g.condition.to_string(),
            g.stage.label().to_string(),
            g.stimulus_a.clone(),
            g.stimulus_b.clone(),
            num(g.peak_a),
            num(g.peak_b),
            num(g.gap),
        ])?;
    }
    w.flush().map_err(write_err(&gap_path))?;

    let prof_path = dir.join(PROFILES_CSV);
    let mut w = csv_writer(&prof_path)?;
    let mut header = vec![
        "condition".to_string(),
        "curve".into(),
        "stimulus_id".into(),
    ];
    header.extend(angle_headers(n));
    w.write_record(&header)?;
    let mut baselines: Vec<&BaselineRow> = record.baselines.iter().collect();
    baselines.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
    for b in baselines {
        let mut line = vec![
            b.condition.to_string(),
            NO_FEEDBACK.to_string(),
            b.stimulus_id.clone(),
        ];
        line.extend(b.combined.profile.values().iter().map(|&v| num(v)));
        w.write_record(&line)?;
    }
    w.flush().map_err(write_err(&prof_path))?;

    let cfg_path = dir.join(CONFIG_SNAPSHOT);
    fs::File::create(&cfg_path)
        .and_then(|mut f| f.write_all(record.config_snapshot.as_bytes()))
        .map_err(write_err(&cfg_path))?;

    Ok(vec![pred_path, gap_path, prof_path, cfg_path])
}

/// Curve label of the no-feedback rows in the profiles table.
pub const NO_FEEDBACK: &str = "no_feedback";

fn table_err(path: &Path, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Table {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn parse_stage_label(s: &str, path: &Path) -> Result<Stage, ExperimentError> {
    s.parse::<Stage>()
        .map_err(|_| table_err(path, format!("unknown stage `{s}`")))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64, ExperimentError> {
    s.parse::<f64>()
        .map_err(|_| table_err(path, format!("not a number: `{s}`")))
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>, ExperimentError> {
    let file = fs::File::open(path).map_err(|source| ExperimentError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::Reader::from_reader(file))
}

/// Reads a record written by [`write_record`]. The profiles table and the
/// config snapshot are optional.
pub fn read_record(dir: &Path) -> Result<RunRecord, ExperimentError> {
    let pred_path = dir.join(PREDICTIONS_CSV);
    let mut r = open_reader(&pred_path)?;
    let headers = r.headers()?.clone();
    if headers.len() < 8 || &headers[0] != "condition" || &headers[5] != "peak" {
        return Err(table_err(&pred_path, "unexpected header"));
    }
    let mut rows = Vec::new();
    let mut stages = Vec::new();
    let mut condition = None;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(table_err(&pred_path, "ragged row"));
        }
        let c: Condition = rec[0].parse()?;
        condition.get_or_insert(c);
        let stage = parse_stage_label(&rec[1], &pred_path)?;
        if !stages.contains(&stage) {
            stages.push(stage);
        }
        let ox = rec[3]
            .parse::<usize>()
            .map_err(|_| table_err(&pred_path, "bad observation_x"))?;
        let oy = rec[4]
            .parse::<usize>()
            .map_err(|_| table_err(&pred_path, "bad observation_y"))?;
        let values = (7..rec.len())
            .map(|i| parse_f64(&rec[i], &pred_path))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(PredictionRow {
            condition: c,
            stimulus_id: rec[2].to_string(),
            result: PredictionResult {
                stage,
                observation: (ox, oy),
                profile: OrientationProfile::new(values)
                    .map_err(|e| table_err(&pred_path, e.to_string()))?,
                peak: parse_f64(&rec[5], &pred_path)?,
                argpeak_deg: parse_f64(&rec[6], &pred_path)?,
            },
        });
    }
    stages.sort();

    let mut baselines = Vec::new();
    let prof_path = dir.join(PROFILES_CSV);
    if prof_path.exists() {
        let mut r = open_reader(&prof_path)?;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() < 4 || &rec[1] != NO_FEEDBACK {
                continue;
            }
            let c: Condition = rec[0].parse()?;
            condition.get_or_insert(c);
            let values = (3..rec.len())
                .map(|i| parse_f64(&rec[i], &prof_path))
                .collect::<Result<Vec<_>, _>>()?;
            let profile = OrientationProfile::new(values)
                .map_err(|e| table_err(&prof_path, e.to_string()))?;
            baselines.push(BaselineRow {
                condition: c,
                stimulus_id: rec[2].to_string(),
                combined: Combined::from_profile(profile),
            });
        }
    }

    let config_snapshot = fs::read_to_string(dir.join(CONFIG_SNAPSHOT)).unwrap_or_default();
    let mut record = RunRecord {
        condition: condition.unwrap_or(Condition::I),
        config_snapshot,
        stages,
        rows,
        gaps: Vec::new(),
        baselines,
    };
    record.gaps = compute_gaps(&record);
    Ok(record)
}

/// Peaks grouped by stimulus id, in stage order.
pub fn peaks_by_stimulus(record: &RunRecord) -> BTreeMap<String, Vec<(Stage, f64)>> {
    let mut out: BTreeMap<String, Vec<(Stage, f64)>> = BTreeMap::new();
    for r in &record.rows {
        out.entry(r.stimulus_id.clone())
            .or_default()
            .push((r.result.stage, r.result.peak));
    }
    for v in out.values_mut() {
        v.sort_by_key(|a| a.0);
    }
    out
}
