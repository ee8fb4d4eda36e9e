use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};

use hse_core::gnb::{estimate_vo2max_from_power, gene_balance, AttrPath};
use hse_core::ievent::{evaluate_rule, parse_rule_file, EvalError, EvalOptions, Rule};
use hse_core::knowledge::{
    distance_to_region, instantiate_with, match_laminae, parse_knowledge, InstantiateOptions,
};
use hse_core::learner::{
    apply_parallel_fit, daily_best_power, fit_feature_model, fit_parallel_edge, fit_vam_family,
    fuse, ground_truth_vo2max, max_slope_pct, memory_sweep, select_vam_model, vam_windows,
    ActivityStreams, FeatureModel, ParallelFitConfig, VamWindow, HR_POWER_EDGE,
};
use hse_core::loadmetrics::{
    active_time, cp_curve, log_spaced_durations, pollutant_intake, trimp, AthleteProfile,
    BreathingModel, MAX_CP_DURATION_S,
};
use hse_core::personicle::{
    attach_geo_context, ingest_activity_csv, parse_locations_csv, parse_sensor_csv,
    parse_timestamp, Event, GeoMatchConfig, ParamValue, Personicle, Store, StreamSeries,
};

use crate::cli::{
    Cli, Command, IngestArgs, InitArgs, LearnCommand, QueryCommand, RangeArgs, ReportCommand,
    RulesCommand, StateCommand, UpdateArgs,
};
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::pipeline::{
    activities, daily_csv, lamina_dimensions, report_columns, ActivityData, Pipeline, Settings,
    SECONDS_PER_DAY,
};
use crate::workspace::{read_input, Meta, Workspace};

/// Window of the best-effort power used as VO2max ground truth.
const GROUND_TRUTH_WINDOW_S: usize = 240;

/// US EPA PM2.5 breakpoints in µg/m³ (upper bound of each band).
const PM25_BANDS: &[(f64, &str)] = &[
    (12.0, "good"),
    (35.4, "moderate"),
    (55.4, "unhealthy-sensitive"),
    (150.4, "unhealthy"),
    (250.4, "very-unhealthy"),
    (f64::INFINITY, "hazardous"),
];

pub fn run(cli: Cli) -> Result<String> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let store = cli
        .store
        .clone()
        .or_else(|| cfg.path("store"))
        .ok_or_else(|| {
            CliError::Usage("no store given; pass --store or set `store` in the config".into())
        })?;
    let ctx = Context {
        ws: Workspace::new(store),
        cfg,
    };
    match cli.command {
        Command::Init(a) => ctx.init(a),
        Command::Ingest(a) => ctx.ingest(a),
        Command::Rules(RulesCommand::Check { file }) => rules_check(&file),
        Command::Rules(RulesCommand::Run { file, from, to }) => ctx.rules_run(&file, from, to),
        Command::Update(a) => ctx.update(a),
        Command::Query(QueryCommand::Readiness { roi, day }) => ctx.readiness(roi.as_deref(), day),
        Command::Query(QueryCommand::Exposure { activity }) => ctx.exposure(&activity),
        Command::Query(QueryCommand::Heart(r)) => ctx.heart(&r),
        Command::Query(QueryCommand::Sv(r)) => ctx.sv(&r),
        Command::Learn(LearnCommand::Edges { as_of }) => ctx.learn_edges(as_of),
        Command::Learn(LearnCommand::Fusion) => ctx.learn_fusion(),
        Command::Learn(LearnCommand::Memory { horizons, feature }) => {
            ctx.learn_memory(&horizons, &feature)
        }
        Command::Report(ReportCommand::Cp { day, points }) => ctx.report_cp(day, points),
        Command::Report(ReportCommand::Daily(r)) => ctx.report_daily(&r),
        Command::State(StateCommand::Dump { day }) => ctx.dump(day),
    }
}

struct Context {
    ws: Workspace,
    cfg: Config,
}

fn days(from: NaiveDate, to: NaiveDate) -> Result<Vec<NaiveDate>> {
    if from > to {
        return Err(CliError::Usage(format!("--from {from} is after --to {to}")));
    }
    Ok(from.iter_days().take_while(|d| *d <= to).collect())
}

fn load_rules(path: &Path) -> Result<Vec<Rule>> {
    let text = read_input(path)?;
    parse_rule_file(&text, None).map_err(|source| CliError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn rules_check(path: &Path) -> Result<String> {
    let rules = load_rules(path)?;
    let mut out = String::new();
    for r in &rules {
        let streams = r.expr.streams().join(",");
        writeln!(out, "{}\tstreams={streams}", r.name).ok();
        for a in &r.annotations {
            writeln!(out, "  {}:{}: {}", a.line, a.column, a.message).ok();
        }
    }
    writeln!(out, "{} rule(s) ok", rules.len()).ok();
    Ok(out)
}

fn parse_genotype(raw: &str) -> Result<(String, String)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| CliError::Usage(format!("genotype `{raw}` must look like rsid=GENOTYPE")))
}

fn open_store(path: &Path) -> Result<Store> {
    Ok(Store::open(path)?)
}

/// Sums per-activity values onto each calendar day from the first to the
/// last activity day; days without activity are explicit zeros.
fn daily_totals(per_activity: &[(NaiveDate, f64)]) -> BTreeMap<NaiveDate, f64> {
    let mut out = BTreeMap::new();
    let (Some(first), Some(last)) = (
        per_activity.iter().map(|(d, _)| *d).min(),
        per_activity.iter().map(|(d, _)| *d).max(),
    ) else {
        return out;
    };
    for d in first.iter_days().take_while(|d| *d <= last) {
        out.insert(d, 0.0);
    }
    for (d, v) in per_activity {
        *out.entry(*d).or_default() += v;
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Context {
    fn settings(&self) -> Result<Settings> {
        Settings::from_config(&self.cfg)
    }

    fn snapshot(&self) -> Result<std::sync::Arc<Personicle>> {
        Ok(open_store(self.ws.store())?.snapshot())
    }

    fn init(&self, a: InitArgs) -> Result<String> {
        let knowledge_path = a
            .knowledge
            .or_else(|| self.cfg.path("knowledge"))
            .ok_or_else(|| {
                CliError::Usage("no knowledge file; pass --knowledge or set `knowledge`".into())
            })?;
        let text = read_input(&knowledge_path)?;
        let base = parse_knowledge(&text)?;
        let profile_text = read_input(&a.profile)?;
        let profile: AthleteProfile = serde_json::from_str(&profile_text)
            .map_err(|e| CliError::Data(format!("profile {}: {e}", a.profile.display())))?;
        profile.validate()?;

        let lamina = match &a.lamina {
            Some(name) => base
                .lamina(name)
                .ok_or_else(|| CliError::Usage(format!("knowledge file has no lamina `{name}`")))?,
            None => {
                let matched = match_laminae(&a.intent, &base);
                let Some(first) = matched.first().copied() else {
                    return Err(CliError::Data(format!(
                        "no lamina matches intent `{}`",
                        a.intent
                    )));
                };
                if matched.len() > 1 {
                    tracing::info!(
                        chosen = %first.name,
                        candidates = matched.len(),
                        "several laminae match; pass --lamina to choose another"
                    );
                }
                first
            }
        };

        let mut genotypes: BTreeMap<String, String> = self
            .cfg
            .with_prefix("genotype.")
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        for g in &a.genotypes {
            let (k, v) = parse_genotype(g)?;
            genotypes.insert(k, v);
        }
        let max_depth = match self.cfg.get("max_depth") {
            None => None,
            Some(_) => {
                let d = self.cfg.number("max_depth", 0.0)?;
                if d < 0.0 || d.fract() != 0.0 {
                    return Err(CliError::Usage(format!(
                        "max_depth must be a whole number, got {d}"
                    )));
                }
                Some(d as usize)
            }
        };
        let opts = InstantiateOptions {
            max_depth,
            apply_patches: true,
        };
        let block = instantiate_with(lamina, &base, &profile, &genotypes, &opts)?;

        let _lock = self.ws.lock()?;
        let meta = Meta {
            intent: a.intent.clone(),
            lamina: lamina.name.clone(),
            profile,
            genotypes,
        };
        self.ws.initialize(&meta, &text, &block)?;
        Ok(format!(
            "initialized lamina {} ({} nodes, {} edges)\n",
            lamina.name,
            block.nodes.len(),
            block.edges.len()
        ))
    }

    fn ingest(&self, a: IngestArgs) -> Result<String> {
        if a.files.is_empty()
            && a.locations.is_none()
            && a.sensors.is_none()
            && a.observations.is_none()
        {
            return Err(CliError::Usage("nothing to ingest".into()));
        }
        let _lock = self.ws.lock()?;
        let mut store = open_store(self.ws.store())?;
        let mut out = String::new();
        for path in &a.files {
            let import = ingest_activity_csv(path)?;
            let id = import.event.id.clone();
            if store.snapshot().event(&id).is_some() {
                tracing::warn!(activity = %id, file = %path.display(), "activity already ingested; skipped");
                writeln!(out, "{id}\tskipped (already ingested)").ok();
                continue;
            }
            store.append_activity(&import)?;
            let rows = import
                .streams
                .iter()
                .map(StreamSeries::len)
                .max()
                .unwrap_or(0);
            writeln!(
                out,
                "{id}\t{rows} rows\t{} skipped rows\t{} skipped cells",
                import.skipped_rows, import.skipped_cells
            )
            .ok();
        }
        if let Some(p) = &a.locations {
            let locs = parse_locations_csv(&read_input(p)?)?;
            store.append_locations(&locs)?;
            writeln!(out, "locations\t{}", locs.len()).ok();
        }
        if let Some(p) = &a.sensors {
            let readings = parse_sensor_csv(&read_input(p)?)?;
            store.append_sensors(&readings)?;
            writeln!(out, "sensors\t{}", readings.len()).ok();
        }
        if let Some(p) = &a.observations {
            let events = parse_observations(&read_input(p)?, p)?;
            let mut added = 0;
            for e in events {
                if store.snapshot().event(&e.id).is_some() {
                    continue;
                }
                store.append_event(e)?;
                added += 1;
            }
            writeln!(out, "observations\t{added}").ok();
        }
        Ok(out)
    }

    fn rules_run(
        &self,
        path: &Path,
        from: Option<NaiveDate>,
        to: Option<NaiveDate>,
    ) -> Result<String> {
        let rules = load_rules(path)?;
        let settings = self.settings()?;
        let _lock = self.ws.lock()?;
        let mut store = open_store(self.ws.store())?;
        let data = store.snapshot();
        let mut out = String::from("rule,activity,start,end,duration_s\n");
        for a in activities(&data, &settings)
            .into_iter()
            .filter(|a| from.is_none_or(|f| a.day >= f) && to.is_none_or(|t| a.day <= t))
        {
            for rule in &rules {
                let found = match evaluate_rule(
                    rule,
                    &a.streams,
                    &data.events,
                    a.start,
                    a.end,
                    &EvalOptions::default(),
                ) {
                    Ok(f) => f,
                    Err(EvalError::MissingStream(s)) => {
                        tracing::warn!(rule = %rule.name, activity = %a.id, stream = %s, "stream absent; rule skipped");
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                for ie in found {
                    let id = format!("ie-{}-{}", ie.rule_name, ie.start);
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        ie.rule_name,
                        a.id,
                        ie.start,
                        ie.end,
                        ie.duration_s()
                    )
                    .ok();
                    if data.event(&id).is_some() {
                        continue;
                    }
                    store.append_event(Event {
                        id,
                        event_type: "interface".into(),
                        event_name: ie.rule_name.clone(),
                        start: ie.start,
                        end: ie.end - 1,
                        parameters: ie
                            .attributes
                            .iter()
                            .map(|(k, v)| (k.clone(), ParamValue::Number(*v)))
                            .collect(),
                        stream_refs: BTreeSet::new(),
                    })?;
                }
            }
        }
        Ok(out)
    }

    fn rules_for_update(&self, explicit: Option<PathBuf>) -> Result<Vec<Rule>> {
        match explicit.or_else(|| self.cfg.path("rules")) {
            Some(p) => load_rules(&p),
            None => Ok(Vec::new()),
        }
    }

    fn update(&self, a: UpdateArgs) -> Result<String> {
        let range = days(a.from, a.to)?;
        let rules = self.rules_for_update(a.rules)?;
        let settings = self.settings()?;
        let meta = self.ws.meta()?;
        let base = self.ws.knowledge()?;
        let _lock = self.ws.lock()?;

        let previous = a.from - Duration::days(1);
        let stored = self.ws.days()?;
        let block = if stored.contains(&previous) {
            self.ws.day(previous)?.block
        } else if let Some(first_gap) = stored.iter().find(|d| **d < previous) {
            let resume = stored
                .iter()
                .filter(|d| **d < a.from)
                .max()
                .map_or(*first_gap, |d| *d + Duration::days(1));
            return Err(CliError::State(format!(
                "day {previous} has not been updated; run `hse update --from {resume} --to {}`",
                a.to
            )));
        } else {
            self.ws.initial_block()?
        };

        let data = self.snapshot()?;
        let fusion = self.ws.fusion()?;
        let pipeline = Pipeline::new(&meta, &base, &data, &rules, settings, fusion)?;
        let records = pipeline.run(block, range[0], *range.last().expect("non-empty range"))?;
        for r in &records {
            self.ws.save_day(r)?;
        }
        self.ws.remove_days_after(a.to)?;
        let reports: Vec<_> = records.iter().map(|r| &r.report).collect();
        Ok(daily_csv(&reports, &pipeline.columns()))
    }

    fn latest_day(&self) -> Result<NaiveDate> {
        self.ws.days()?.last().copied().ok_or_else(|| {
            CliError::State("no day has been updated; run `hse update` first".into())
        })
    }

    fn readiness(&self, roi: Option<&str>, day: Option<NaiveDate>) -> Result<String> {
        let meta = self.ws.meta()?;
        let base = self.ws.knowledge()?;
        let day = match day {
            Some(d) => d,
            None => self.latest_day()?,
        };
        let record = self.ws.day(day)?;
        let lamina = base.lamina(&meta.lamina).ok_or_else(|| {
            CliError::State(format!(
                "lamina `{}` missing from stored knowledge",
                meta.lamina
            ))
        })?;
        let regions: Vec<_> = match roi {
            Some(label) => vec![lamina.region(label).ok_or_else(|| {
                let known: Vec<&str> = lamina.regions.iter().map(|r| r.label.as_str()).collect();
                CliError::Usage(format!(
                    "lamina {} has no region `{label}` (known: {})",
                    lamina.name,
                    known.join(", ")
                ))
            })?],
            None => lamina.regions.iter().collect(),
        };
        let state: BTreeMap<String, f64> = lamina_dimensions(&base, &meta.lamina)
            .into_iter()
            .filter_map(|(d, path)| record.block.get(&path).ok().map(|v| (d, v)))
            .collect();
        let mut out = String::from("roi,day,status,distance\n");
        for r in regions {
            let distance = distance_to_region(&state, r)?;
            let status = if distance == 0.0 {
                "ready"
            } else {
                "not-ready"
            };
            writeln!(out, "{},{day},{status},{distance}", r.label).ok();
        }
        Ok(out)
    }

    fn bands(&self, stream_id: &str) -> Result<Vec<(f64, String)>> {
        let key = format!("bands.{stream_id}");
        let Some(raw) = self.cfg.get(&key) else {
            return Ok(if stream_id == "PM2_5" {
                PM25_BANDS
                    .iter()
                    .map(|(v, l)| (*v, l.to_string()))
                    .collect()
            } else {
                Vec::new()
            });
        };
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parsed = part.split_once(':').and_then(|(v, l)| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .map(|v| (v, l.trim().to_string()))
            });
            match parsed {
                Some(b) => out.push(b),
                None => {
                    return Err(CliError::Usage(format!(
                        "config `{key}`: `{part}` is not upper:label"
                    )))
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    fn exposure(&self, activity: &str) -> Result<String> {
        let meta = self.ws.meta()?;
        let data = self.snapshot()?;
        let event = data
            .event(activity)
            .filter(|e| e.event_type == "activity")
            .ok_or_else(|| CliError::Data(format!("no activity `{activity}` in the store")))?;
        let locations = data.locations_in(event.start, event.end);
        if locations.is_empty() {
            return Err(CliError::Data(format!(
                "activity `{activity}` has no location samples"
            )));
        }
        let hr = data
            .streams
            .get("hr")
            .map(|s| s.slice(event.start, event.end))
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                CliError::Data(format!("activity `{activity}` has no heart rate samples"))
            })?;
        let join = attach_geo_context(locations, &data.sensors, &GeoMatchConfig::default());
        if join.series.is_empty() {
            return Err(CliError::Data(format!(
                "no sensor reading lies near the route of `{activity}`"
            )));
        }

        let mut rows = String::from("pollutant,minute,concentration,intake_ug,band,high_intake\n");
        let mut totals =
            String::from("pollutant,total_ug,high_intake_minutes,unmatched_locations\n");
        for conc in &join.series {
            let intake = pollutant_intake(&hr, conc, &meta.profile, &BreathingModel::default())?;
            let bands = self.bands(&conc.stream_id)?;
            let mut minute_conc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
            for s in &conc.samples {
                let e = minute_conc
                    .entry(s.t.div_euclid(60) * 60)
                    .or_insert((0.0, 0));
                e.0 += s.value;
                e.1 += 1;
            }
            let mut high_minutes = 0;
            for (m, ug) in &intake.per_minute {
                let c = minute_conc.get(m).map_or(f64::NAN, |(s, n)| s / *n as f64);
                let band = bands
                    .iter()
                    .find(|(upper, _)| c <= *upper)
                    .map_or("", |(_, l)| l.as_str());
                let high = intake.events.iter().any(|e| *m >= e.start && *m < e.end);
                high_minutes += usize::from(high);
                writeln!(
                    rows,
                    "{},{m},{c},{ug},{band},{}",
                    conc.stream_id,
                    u8::from(high)
                )
                .ok();
            }
            writeln!(
                totals,
                "{},{},{high_minutes},{}",
                conc.stream_id,
                intake.total_ug,
                join.gaps.get(&conc.stream_id).copied().unwrap_or(0)
            )
            .ok();
        }
        Ok(format!("{rows}\n{totals}"))
    }

    fn heart(&self, r: &RangeArgs) -> Result<String> {
        let mut out = String::from("date,healthy,pathological,net\n");
        for d in days(r.from, r.to)? {
            let g = gene_balance(&self.ws.day(d)?.block);
            writeln!(out, "{d},{},{},{}", g.healthy, g.pathological, g.net).ok();
        }
        Ok(out)
    }

    fn sv(&self, r: &RangeArgs) -> Result<String> {
        let mut out = String::from("date,co_l_min,hr_rest,sv_ml\n");
        for d in days(r.from, r.to)? {
            let b = self.ws.day(d)?.block;
            writeln!(
                out,
                "{d},{},{},{}",
                b.get("heart:co_rest_l_min")?,
                b.get("heart:hr_rest")?,
                b.get("heart:sv_ml")?
            )
            .ok();
        }
        Ok(out)
    }

    fn learn_edges(&self, as_of: Option<NaiveDate>) -> Result<String> {
        let settings = self.settings()?;
        self.ws.meta()?;
        let _lock = self.ws.lock()?;
        let data = self.snapshot()?;
        let acts = activities(&data, &settings);
        let streams: Vec<ActivityStreams> = acts
            .iter()
            .filter_map(|a| {
                Some(ActivityStreams {
                    id: a.id.clone(),
                    start: a.start,
                    hr: a.stream("hr")?.clone(),
                    power: a.stream("power")?.clone(),
                })
            })
            .collect();
        let as_of_t = match as_of {
            Some(d) => settings.day_start(d) + SECONDS_PER_DAY - 1,
            None => streams.iter().map(|s| s.start).max().ok_or_else(|| {
                CliError::Data("no activity has both heart rate and power".into())
            })?,
        };
        let cfg = ParallelFitConfig {
            ad_gate_pct: self
                .cfg
                .number("ad_gate_pct", ParallelFitConfig::default().ad_gate_pct)?,
            ..ParallelFitConfig::default()
        };
        let fit = fit_parallel_edge(&streams, as_of_t, &cfg)?;
        let mut out = String::from("activity,ad_pct,accepted,reason\n");
        for g in &fit.gates {
            writeln!(
                out,
                "{},{},{},{}",
                g.activity,
                opt(g.ad_pct),
                u8::from(g.accepted),
                g.reason
            )
            .ok();
        }
        let mut block = self.ws.initial_block()?;
        match apply_parallel_fit(&mut block, &fit, HR_POWER_EDGE)? {
            Some(_) => {
                self.ws.save_initial_block(&block)?;
                let m = fit.model.expect("applied fit has a model");
                writeln!(
                    out,
                    "\nedge {HR_POWER_EDGE}: power = {} * hr + {} (n={}, rmse={}); rerun `hse update` to propagate",
                    m.slope, m.intercept, m.n, m.train_rmse
                )
                .ok();
            }
            None => {
                writeln!(
                    out,
                    "\nedge {HR_POWER_EDGE}: not updated (fewer than {} accepted activities)",
                    cfg.min_activities
                )
                .ok();
            }
        }
        Ok(out)
    }

    fn fusion_inputs(&self) -> Result<FusionInputs> {
        let settings = self.settings()?;
        let meta = self.ws.meta()?;
        let data = self.snapshot()?;
        let acts = activities(&data, &settings);
        let power: Vec<(NaiveDate, &StreamSeries)> = acts
            .iter()
            .filter_map(|a| a.stream("power").map(|p| (a.day, p)))
            .collect();
        let best = daily_best_power(&power, GROUND_TRUTH_WINDOW_S);
        let truth = ground_truth_vo2max(&best, meta.profile.mass_kg, settings.horizon_days)?;
        let mut trimps = Vec::new();
        let mut actives = Vec::new();
        for a in &acts {
            if let Some(hr) = a.stream("hr") {
                trimps.push((a.day, trimp(hr, &meta.profile)?));
            }
            if let Some(c) = a.stream("cadence") {
                actives.push((
                    a.day,
                    active_time(c, settings.active_cadence_rpm) as f64 / 60.0,
                ));
            }
        }
        Ok(FusionInputs {
            trimp: daily_totals(&trimps),
            active: daily_totals(&actives),
            truth,
            acts,
            meta,
            settings,
        })
    }

    fn learn_fusion(&self) -> Result<String> {
        let _lock = self.ws.lock()?;
        let inp = self.fusion_inputs()?;
        let h = inp.settings.horizon_days;
        let mut components: Vec<(&str, FeatureModel)> = Vec::new();
        for (name, feature) in [("trimp", &inp.trimp), ("active_time", &inp.active)] {
            match fit_feature_model(feature, &inp.truth, h) {
                Ok(m) => components.push((name, m)),
                Err(e) => tracing::warn!(component = name, error = %e, "component omitted"),
            }
        }
        let vam = VamComponent::fit(&inp);

        let mut out = String::from("date,ground_truth,trimp,active_time,vam,fused\n");
        let mut fused = BTreeMap::new();
        let all_days: BTreeSet<NaiveDate> =
            inp.truth.keys().chain(inp.trimp.keys()).copied().collect();
        for d in all_days {
            let mut est: Vec<(f64, f64)> = Vec::new();
            let mut cols = [None, None, None];
            for (name, m) in &components {
                let feature = if *name == "trimp" {
                    &inp.trimp
                } else {
                    &inp.active
                };
                if let Some(v) = m.estimate(feature, d) {
                    cols[usize::from(*name != "trimp")] = Some(v);
                    est.push((v, m.model.train_rmse));
                }
            }
            if let Some((v, rmse)) = vam
                .as_ref()
                .and_then(|c| c.estimate(d).map(|v| (v, c.train_rmse)))
            {
                cols[2] = Some(v);
                est.push((v, rmse));
            }
            let f = if est.is_empty() {
                None
            } else {
                Some(fuse(&est)?.value)
            };
            if let Some(v) = f {
                fused.insert(d, v);
            }
            writeln!(
                out,
                "{d},{},{},{},{},{}",
                opt(inp.truth.get(&d).copied()),
                opt(cols[0]),
                opt(cols[1]),
                opt(cols[2]),
                opt(f)
            )
            .ok();
        }
        if fused.is_empty() {
            return Err(CliError::Data("no day had a fusable estimate".into()));
        }
        self.ws.save_fusion(&fused)?;

        out.push_str("\ncomponent,train_rmse,test_rmse,n_train,n_test\n");
        for (name, m) in &components {
            writeln!(
                out,
                "{name},{},{},{},{}",
                m.model.train_rmse,
                opt(m.test_rmse),
                m.train_days,
                m.test_days
            )
            .ok();
        }
        if let Some(v) = &vam {
            writeln!(
                out,
                "vam,{},{},{},{}",
                v.train_rmse,
                opt(v.test_rmse),
                v.n_train,
                v.n_test
            )
            .ok();
        }
        Ok(out)
    }

    fn learn_memory(&self, horizons: &[u32], feature: &str) -> Result<String> {
        if horizons.is_empty() || horizons.contains(&0) {
            return Err(CliError::Usage(
                "horizons must be positive day counts".into(),
            ));
        }
        let inp = self.fusion_inputs()?;
        let series = match feature {
            "trimp" => &inp.trimp,
            "active_time" => &inp.active,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown feature `{other}` (trimp, active_time)"
                )))
            }
        };
        let rows = memory_sweep(series, &inp.truth, horizons);
        let mut out = String::from("horizon_days,test_rmse,std_error,n_train,n_test\n");
        for r in &rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.horizon_days, r.test_rmse, r.std_error, r.n_train, r.n_test
            )
            .ok();
        }
        Ok(out)
    }

    fn report_cp(&self, day: NaiveDate, points: usize) -> Result<String> {
        if points == 0 {
            return Err(CliError::Usage("--points must be positive".into()));
        }
        let settings = self.settings()?;
        let meta = self.ws.meta()?;
        let base = self.ws.knowledge()?;
        let data = self.snapshot()?;
        let acts = activities(&data, &settings);
        let horizon = Duration::days(settings.horizon_days as i64);
        let powers: Vec<&StreamSeries> = acts
            .iter()
            .filter(|a| a.day <= day && a.day > day - horizon)
            .filter_map(|a| a.stream("power"))
            .collect();
        let durations = log_spaced_durations(MAX_CP_DURATION_S, points);
        let curve = cp_curve(&powers, &durations);
        let mass = meta.profile.mass_kg;
        let mut out = String::from("kind,label,duration_s,watts,wpkg\n");
        for (d, w) in curve.durations.iter().zip(&curve.watts) {
            writeln!(out, "curve,,{d},{w},{}", w / mass).ok();
        }
        if let Some(lamina) = base.lamina(&meta.lamina) {
            for r in &lamina.regions {
                for (dim, iv) in &r.bounds {
                    let Some(secs) = dim.strip_prefix("cp_").and_then(|s| s.strip_suffix('s'))
                    else {
                        continue;
                    };
                    for (kind, bound) in [("roi-min", iv.min), ("roi-max", iv.max)] {
                        if let Some(b) = bound {
                            writeln!(out, "{kind},{},{secs},{},{b}", r.label, b * mass).ok();
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn report_daily(&self, r: &RangeArgs) -> Result<String> {
        let meta = self.ws.meta()?;
        let base = self.ws.knowledge()?;
        let records = days(r.from, r.to)?
            .into_iter()
            .map(|d| self.ws.day(d))
            .collect::<Result<Vec<_>>>()?;
        let reports: Vec<_> = records.iter().map(|r| &r.report).collect();
        Ok(daily_csv(&reports, &report_columns(&base, &meta.lamina)))
    }

    fn dump(&self, day: Option<NaiveDate>) -> Result<String> {
        let block = match day {
            Some(d) => self.ws.day(d)?.block,
            None => self.ws.initial_block()?,
        };
        let mut out = String::from("path,value\n");
        for (p, v) in block.flatten() {
            writeln!(out, "{p},{v}").ok();
        }
        Ok(out)
    }
}

struct FusionInputs {
    trimp: BTreeMap<NaiveDate, f64>,
    active: BTreeMap<NaiveDate, f64>,
    truth: BTreeMap<NaiveDate, f64>,
    acts: Vec<ActivityData>,
    meta: Meta,
    settings: Settings,
}

/// VO2max from climbing: the best 4-minute VAM of a day mapped to relative
/// power through the slope-matched model.
struct VamComponent {
    per_day: BTreeMap<NaiveDate, f64>,
    train_rmse: f64,
    test_rmse: Option<f64>,
    n_train: usize,
    n_test: usize,
}

impl VamComponent {
    fn fit(inp: &FusionInputs) -> Option<Self> {
        let mass = inp.meta.profile.mass_kg;
        let mut windows: BTreeMap<NaiveDate, Vec<VamWindow>> = BTreeMap::new();
        for a in &inp.acts {
            let (Some(alt), Some(speed), Some(power)) =
                (a.stream("altitude"), a.stream("speed"), a.stream("power"))
            else {
                continue;
            };
            match vam_windows(alt, speed, power, mass, a.start, a.end) {
                Ok(w) => windows.entry(a.day).or_default().extend(w),
                Err(e) => tracing::warn!(activity = %a.id, error = %e, "VAM windows skipped"),
            }
        }
        let truth_days: Vec<NaiveDate> = inp.truth.keys().copied().collect();
        let split = hse_core::learner::chronological_split(truth_days.len());
        let cutoff = *truth_days.get(split.checked_sub(1)?)?;
        let train: Vec<VamWindow> = windows
            .range(..=cutoff)
            .flat_map(|(_, w)| w.iter().copied())
            .collect();
        let family = match fit_vam_family(&train) {
            Ok(f) => f,
            Err(e) => {
                tracing::warn!(error = %e, "VAM component omitted");
                return None;
            }
        };
        let per_day: BTreeMap<NaiveDate, f64> = windows
            .iter()
            .filter_map(|(d, ws)| {
                let (threshold, model) = select_vam_model(&family, max_slope_pct(ws)?)?;
                let best = ws
                    .iter()
                    .filter(|w| w.slope_pct >= threshold as f64)
                    .map(|w| w.vam)
                    .reduce(f64::max)?;
                estimate_vo2max_from_power(model.predict(best) * mass, mass)
                    .ok()
                    .map(|v| (*d, v))
            })
            .collect();
        let errors = |train: bool| -> Vec<f64> {
            per_day
                .iter()
                .filter(|(d, _)| (**d <= cutoff) == train)
                .filter_map(|(d, v)| inp.truth.get(d).map(|t| (v - t).powi(2)))
                .collect()
        };
        let rms =
            |e: &[f64]| (!e.is_empty()).then(|| (e.iter().sum::<f64>() / e.len() as f64).sqrt());
        let (tr, te) = (errors(true), errors(false));
        let train_rmse = rms(&tr)?;
        Some(Self {
            train_rmse,
            test_rmse: rms(&te),
            n_train: tr.len(),
            n_test: te.len(),
            per_day,
        })
    }

    fn estimate(&self, day: NaiveDate) -> Option<f64> {
        self.per_day.get(&day).copied()
    }
}

/// Observation CSV `t,path,value` into `observation` events.
fn parse_observations(text: &str, path: &Path) -> Result<Vec<Event>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bad = |msg: String| CliError::Data(format!("observations {}: {msg}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ti, pi, vi) = (col("t")?, col("path")?, col("value")?);
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = row + 2;
        let t = parse_timestamp(rec.get(ti).unwrap_or(""))
            .ok_or_else(|| bad(format!("row {line}: bad timestamp")))?;
        let attr = rec.get(pi).unwrap_or("").to_string();
        AttrPath::parse(&attr)?;
        let value = rec
            .get(vi)
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(format!("row {line}: bad value")))?;
        out.push(Event {
            id: format!("obs-{t}-{attr}"),
            event_type: "observation".into(),
            event_name: attr.clone(),
            start: t,
            end: t,
            parameters: BTreeMap::from([
                ("path".to_string(), ParamValue::Text(attr)),
                ("value".to_string(), ParamValue::Number(value)),
            ]),
            stream_refs: BTreeSet::new(),
        });
    }
    Ok(out)
}
