use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::detectors::{climb_grid, spike_grid};
use super::{
    BoolSeries, DetectorKind, EvalError, EvalOptions, Expr, InterfaceEvent, Rule, StreamLookup,
};
use crate::personicle::{Event, Timestamp};

struct Ctx<'a, S: ?Sized> {
    streams: &'a S,
    events: &'a [Event],
    t0: Timestamp,
    t1: Timestamp,
    grids: HashMap<String, Vec<Option<f64>>>,
}

impl<S: StreamLookup + ?Sized> Ctx<'_, S> {
    fn len(&self) -> usize {
        (self.t1 - self.t0 + 1) as usize
    }

    fn grid(&mut self, stream: &str) -> Result<&Vec<Option<f64>>, EvalError> {
        if !self.grids.contains_key(stream) {
            let series = self
                .streams
                .lookup(stream)
                .ok_or_else(|| EvalError::MissingStream(stream.to_string()))?;
            let g = series.hold_grid(self.t0, self.t1, 1);
            self.grids.insert(stream.to_string(), g);
        }
        Ok(&self.grids[stream])
    }

    fn eval(&mut self, expr: &Expr) -> Result<Vec<bool>, EvalError> {
        let n = self.len();
        Ok(match expr {
            Expr::Or(xs) => {
                let mut acc = vec![false; n];
                for x in xs {
                    for (a, b) in acc.iter_mut().zip(self.eval(x)?) {
                        *a |= b;
                    }
                }
                acc
            }
            Expr::And(xs) => {
                let mut acc = vec![true; n];
                for x in xs {
                    for (a, b) in acc.iter_mut().zip(self.eval(x)?) {
                        *a &= b;
                    }
                }
                acc
            }
            Expr::Not(x) => self.eval(x)?.into_iter().map(|b| !b).collect(),
            Expr::Compare { stream, op, value } => self
                .grid(stream)?
                .iter()
                .map(|v| v.is_some_and(|v| op.holds(v, *value)))
                .collect(),
            Expr::EventPredicate(name) => {
                let mut out = vec![false; n];
                for e in self.events.iter().filter(|e| event_matches(e, name)) {
                    let a = e.start.max(self.t0);
                    let b = e.end.min(self.t1);
                    for t in a..=b {
                        out[(t - self.t0) as usize] = true;
                    }
                }
                out
            }
            Expr::Detector {
                kind,
                stream,
                params,
            } => {
                let window_s = Expr::param(*kind, params, "window_s");
                if !(window_s >= 1.0 && window_s.fract() == 0.0) {
                    return Err(EvalError::Parameter(format!(
                        "window_s must be a positive whole number, got {window_s}"
                    )));
                }
                let w = window_s as usize;
                let series = self
                    .streams
                    .lookup(stream)
                    .ok_or_else(|| EvalError::MissingStream(stream.clone()))?;
                // Detectors look back `w` seconds before the window start.
                let grid = series.hold_grid(self.t0 - w as i64, self.t1, 1);
                let full = match kind {
                    DetectorKind::Spike => {
                        spike_grid(&grid, w, Expr::param(*kind, params, "delta"))
                    }
                    DetectorKind::Climb => {
                        climb_grid(&grid, w, Expr::param(*kind, params, "gain_m"))
                    }
                };
                full[w..].to_vec()
            }
        })
    }
}

/// Event predicates match the event type or name, ignoring ASCII case.
pub(crate) fn event_matches(e: &Event, name: &str) -> bool {
    e.event_type.eq_ignore_ascii_case(name) || e.event_name.eq_ignore_ascii_case(name)
}

fn check_window(t0: Timestamp, t1: Timestamp) -> Result<(), EvalError> {
    if t1 < t0 {
        return Err(EvalError::InvalidWindow(t0, t1));
    }
    Ok(())
}

/// Per-second truth of `expr` over `[t0, t1]`.
pub fn evaluate_truth<S: StreamLookup + ?Sized>(
    expr: &Expr,
    streams: &S,
    events: &[Event],
    t0: Timestamp,
    t1: Timestamp,
) -> Result<BoolSeries, EvalError> {
    check_window(t0, t1)?;
    let mut ctx = Ctx {
        streams,
        events,
        t0,
        t1,
        grids: HashMap::new(),
    };
    let values = ctx.eval(expr)?;
    Ok(BoolSeries { t0, values })
}

/// Turns maximal true runs of at least `min_duration_s` seconds into events,
/// attaching the peak of each listed grid within the run.
pub fn runs_to_events(
    rule_name: &str,
    truth: &BoolSeries,
    peaks: &[(&str, &[Option<f64>])],
    min_duration_s: i64,
) -> Vec<InterfaceEvent> {
    let mut out = Vec::new();
    let v = &truth.values;
    let mut k = 0;
    while k < v.len() {
        if !v[k] {
            k += 1;
            continue;
        }
        let a = k;
        while k < v.len() && v[k] {
            k += 1;
        }
        let len = (k - a) as i64;
        if len < min_duration_s {
            continue;
        }
        let mut attributes = BTreeMap::new();
        attributes.insert("duration".to_string(), len as f64);
        for (name, grid) in peaks {
            let peak = grid[a..k].iter().flatten().copied().reduce(f64::max);
            if let Some(p) = peak {
                attributes.insert(format!("peak_{name}"), p);
            }
        }
        out.push(InterfaceEvent {
            rule_name: rule_name.to_string(),
            start: truth.t0 + a as i64,
            end: truth.t0 + k as i64,
            attributes,
        });
    }
    out
}

/// Evaluates one rule over `[t0, t1]` and returns its interface events.
pub fn evaluate_rule<S: StreamLookup + ?Sized>(
    rule: &Rule,
    streams: &S,
    events: &[Event],
    t0: Timestamp,
    t1: Timestamp,
    opts: &EvalOptions,
) -> Result<Vec<InterfaceEvent>, EvalError> {
    check_window(t0, t1)?;
    let mut ctx = Ctx {
        streams,
        events,
        t0,
        t1,
        grids: HashMap::new(),
    };
    let values = ctx.eval(&rule.expr)?;
    let truth = BoolSeries { t0, values };
    let names = rule.expr.compare_streams();
    for name in &names {
        ctx.grid(name)?;
    }
    let peaks: Vec<(&str, &[Option<f64>])> = names
        .iter()
        .map(|n| (*n, ctx.grids[*n].as_slice()))
        .collect();
    Ok(runs_to_events(
        &rule.name,
        &truth,
        &peaks,
        opts.min_duration_s,
    ))
}

/// Evaluates independent rules in parallel. Output order follows `rules`.
pub fn evaluate_rules<S: StreamLookup + Sync + ?Sized>(
    rules: &[Rule],
    streams: &S,
    events: &[Event],
    t0: Timestamp,
    t1: Timestamp,
    opts: &EvalOptions,
) -> Result<Vec<InterfaceEvent>, EvalError> {
    let per_rule: Vec<_> = rules
        .par_iter()
        .map(|r| evaluate_rule(r, streams, events, t0, t1, opts))
        .collect::<Result<_, _>>()?;
    Ok(per_rule.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ievent::parse_rule;
    use crate::personicle::StreamSeries;

    fn hr(values: &[f64]) -> Vec<StreamSeries> {
        vec![StreamSeries::from_values("hr", "bpm", 0, values)]
    }

    #[test]
    fn constant_high_hr_is_one_event() {
        let rule = parse_rule("V := HR > 140").unwrap();
        let ev = evaluate_rule(
            &rule,
            &hr(&[150.0; 60]),
            &[],
            0,
            59,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].start, ev[0].end), (0, 60));
        assert_eq!(ev[0].attributes["duration"], 60.0);
        assert_eq!(ev[0].attributes["peak_HR"], 150.0);
    }

    #[test]
    fn low_hr_is_empty() {
        let rule = parse_rule("V := HR > 140").unwrap();
        let ev = evaluate_rule(
            &rule,
            &hr(&[100.0; 60]),
            &[],
            0,
            59,
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn short_runs_dropped() {
        let mut v = vec![100.0; 20];
        v[3..6].fill(150.0);
        v[10..13].fill(150.0);
        let rule = parse_rule("V := HR > 140").unwrap();
        let ev = evaluate_rule(&rule, &hr(&v), &[], 0, 19, &EvalOptions::default()).unwrap();
        assert!(ev.is_empty());
        let ev = evaluate_rule(
            &rule,
            &hr(&v),
            &[],
            0,
            19,
            &EvalOptions { min_duration_s: 3 },
        )
        .unwrap();
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn missing_stream_is_named() {
        let rule = parse_rule("V := Power > 400").unwrap();
        let err =
            evaluate_rule(&rule, &hr(&[1.0]), &[], 0, 0, &EvalOptions::default()).unwrap_err();
        assert_eq!(err, EvalError::MissingStream("Power".into()));
    }

    #[test]
    fn event_predicate_uses_type_or_name() {
        let e = Event {
            id: "a".into(),
            event_type: "cycling".into(),
            event_name: "morning ride".into(),
            start: 10,
            end: 19,
            parameters: Default::default(),
            stream_refs: Default::default(),
        };
        let rule = parse_rule("C := Cycling").unwrap();
        let truth = evaluate_truth(&rule.expr, &hr(&[]), &[e], 0, 29).unwrap();
        assert_eq!(truth.count_true(), 10);
        assert_eq!(truth.at(10), Some(true));
        assert_eq!(truth.at(20), Some(false));
    }
}
