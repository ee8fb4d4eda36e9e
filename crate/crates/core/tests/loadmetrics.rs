use chrono::{Days, NaiveDate};
use hse_core::loadmetrics::{
    aerobic_decoupling, cp_curve, ctl, hpa_events, pollutant_intake, spo2_events, trimp,
    AthleteProfile, BreathingModel, DailyLoad, Sex,
};
use hse_core::{Sample, StreamSeries};
use proptest::prelude::*;

fn profile() -> AthleteProfile {
    AthleteProfile {
        mass_kg: 60.0,
        height_cm: 172.0,
        sex: Sex::Female,
        age_years: 34.0,
        hr_rest: 52.0,
        hr_max: Some(186.0),
    }
}

fn base_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 1).unwrap()
}

fn sparse(values: &[(i64, f64)]) -> StreamSeries {
    let mut t = 0;
    let samples = values
        .iter()
        .map(|&(dt, v)| {
            t += dt;
            Sample::new(t, v)
        })
        .collect();
    StreamSeries::new("x", "u").with_samples(samples)
}

/// Brute-force HPA: mark every second covered by a qualifying 5 s window.
fn brute_hpa(values: &[f64], mass: f64) -> Vec<(i64, i64)> {
    let mut covered = vec![false; values.len()];
    for i in 0..values.len().saturating_sub(4) {
        let mean: f64 = values[i..i + 5].iter().sum::<f64>() / 5.0;
        if mean / mass > 10.0 {
            covered[i..i + 5].iter_mut().for_each(|c| *c = true);
        }
    }
    runs(&covered)
}

fn runs(flags: &[bool]) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < flags.len() {
        if flags[k] {
            let a = k;
            while k < flags.len() && flags[k] {
                k += 1;
            }
            out.push((a as i64, k as i64));
        } else {
            k += 1;
        }
    }
    out
}

#[test]
fn decoupling_gating_fixtures() {
    // Drifting ride: steady power, heart rate climbs in the second half.
    let n = 3600;
    let power = StreamSeries::from_values("power", "W", 0, &vec![200.0; n]);
    let drift: Vec<f64> = (0..n)
        .map(|k| {
            if k < n / 2 {
                130.0
            } else {
                130.0 / (1.0 - 0.403)
            }
        })
        .collect();
    let ad =
        aerobic_decoupling(&power, &StreamSeries::from_values("hr", "bpm", 0, &drift)).unwrap();
    assert!((ad - 40.3).abs() < 1e-9, "{ad}");
    let stable: Vec<f64> = (0..n)
        .map(|k| {
            if k < n / 2 {
                130.0
            } else {
                130.0 / (1.0 - 0.009)
            }
        })
        .collect();
    let ad =
        aerobic_decoupling(&power, &StreamSeries::from_values("hr", "bpm", 0, &stable)).unwrap();
    assert!((ad - 0.9).abs() < 1e-9, "{ad}");
}

proptest! {
    #[test]
    fn ctl_translation_invariant_and_linear(
        loads in prop::collection::vec((0u64..80, 0.0f64..300.0), 0..60),
        shift in 0u64..400,
        scale in 0.0f64..5.0,
        horizon in 1u32..60,
    ) {
        let as_of = base_day() + Days::new(80);
        let a: Vec<DailyLoad> = loads.iter().map(|&(d, v)| DailyLoad { date: base_day() + Days::new(d), value: v }).collect();
        let shifted: Vec<DailyLoad> = a.iter().map(|l| DailyLoad { date: l.date + Days::new(shift), value: l.value }).collect();
        let base = ctl(&a, horizon, as_of);
        prop_assert!((ctl(&shifted, horizon, as_of + Days::new(shift)) - base).abs() < 1e-9);
        let scaled: Vec<DailyLoad> = a.iter().map(|l| DailyLoad { date: l.date, value: l.value * scale }).collect();
        prop_assert!((ctl(&scaled, horizon, as_of) - scale * base).abs() < 1e-6);
        let doubled: Vec<DailyLoad> = a.iter().chain(a.iter()).copied().collect();
        prop_assert!((ctl(&doubled, horizon, as_of) - 2.0 * base).abs() < 1e-6);
    }

    #[test]
    fn decoupling_scale_invariant(
        p in prop::collection::vec(50.0f64..400.0, 120..400),
        h in prop::collection::vec(90.0f64..190.0, 120..400),
        kp in 0.1f64..10.0,
        kh in 0.1f64..10.0,
    ) {
        let n = p.len().min(h.len());
        let power = StreamSeries::from_values("power", "W", 0, &p[..n]);
        let hr = StreamSeries::from_values("hr", "bpm", 0, &h[..n]);
        let base = aerobic_decoupling(&power, &hr).unwrap();
        let sp: Vec<f64> = p[..n].iter().map(|v| v * kp).collect();
        let sh: Vec<f64> = h[..n].iter().map(|v| v * kh).collect();
        let scaled = aerobic_decoupling(
            &StreamSeries::from_values("power", "W", 0, &sp),
            &StreamSeries::from_values("hr", "bpm", 0, &sh),
        ).unwrap();
        prop_assert!((scaled - base).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn cp_curve_monotone_and_matches_window_search(
        acts in prop::collection::vec(prop::collection::vec((1i64..3, 0.0f64..900.0), 1..40), 1..4),
    ) {
        let series: Vec<StreamSeries> = acts.iter().map(|a| sparse(a)).collect();
        let refs: Vec<&StreamSeries> = series.iter().collect();
        let durations: Vec<u32> = (1..=90).collect();
        let curve = cp_curve(&refs, &durations);
        prop_assert!(curve.watts.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(curve.watts.iter().all(|w| *w >= 0.0));
        for (&d, &w) in curve.durations.iter().zip(&curve.watts) {
            let mut best = 0.0f64;
            for s in &series {
                let (a, b) = (s.first_t().unwrap(), s.last_t().unwrap());
                let mut dense = vec![0.0; (b - a + 1) as usize];
                for x in &s.samples {
                    dense[(x.t - a) as usize] = x.value;
                }
                for len in d as usize..=dense.len() {
                    for i in 0..=dense.len() - len {
                        best = best.max(dense[i..i + len].iter().sum::<f64>() / len as f64);
                    }
                }
            }
            prop_assert!((w - best).abs() < 1e-9 * (1.0 + best), "d={} got {} want {}", d, w, best);
        }
    }

    #[test]
    fn hpa_matches_brute_force(values in prop::collection::vec(prop_oneof![0.0f64..500.0, 550.0f64..1200.0], 0..300)) {
        let p = profile();
        let s = StreamSeries::from_values("power", "W", 1000, &values);
        let got: Vec<(i64, i64)> = hpa_events(&s, &p).unwrap().iter().map(|e| (e.start - 1000, e.end - 1000)).collect();
        prop_assert_eq!(got, brute_hpa(&values, p.mass_kg));
    }

    #[test]
    fn spo2_matches_brute_force(values in prop::collection::vec(85.0f64..100.0, 0..500)) {
        let s = StreamSeries::from_values("spo2", "%", 0, &values);
        let got: Vec<(i64, i64, f64)> = spo2_events(&s)
            .unwrap()
            .iter()
            .map(|e| (e.start, e.end, e.attributes["min"]))
            .collect();
        let flags: Vec<bool> = values.iter().map(|v| *v < 95.0).collect();
        let want: Vec<(i64, i64, f64)> = runs(&flags)
            .into_iter()
            .map(|(a, b)| (a, b, values[a as usize..b as usize].iter().copied().fold(f64::INFINITY, f64::min)))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn trimp_monotone_in_each_sample(
        values in prop::collection::vec(40.0f64..200.0, 1..400),
        idx in any::<prop::sample::Index>(),
        bump in 0.0f64..50.0,
    ) {
        let p = profile();
        let base = trimp(&StreamSeries::from_values("hr", "bpm", 0, &values), &p).unwrap();
        let mut raised = values.clone();
        raised[idx.index(values.len())] += bump;
        let after = trimp(&StreamSeries::from_values("hr", "bpm", 0, &raised), &p).unwrap();
        prop_assert!(after >= base - 1e-12);
    }

    #[test]
    fn pollutant_total_linear_in_concentration(
        hr in prop::collection::vec(45.0f64..190.0, 1..600),
        conc in prop::collection::vec(0.0f64..80.0, 1..600),
        k in 0.0f64..6.0,
    ) {
        let p = profile();
        let m = BreathingModel::default();
        let n = hr.len().min(conc.len());
        let h = StreamSeries::from_values("hr", "bpm", 0, &hr[..n]);
        let c = StreamSeries::from_values("PM2_5", "ug/m3", 0, &conc[..n]);
        let scaled: Vec<f64> = conc[..n].iter().map(|v| v * k).collect();
        let cs = StreamSeries::from_values("PM2_5", "ug/m3", 0, &scaled);
        let a = pollutant_intake(&h, &c, &p, &m).unwrap().total_ug;
        let b = pollutant_intake(&h, &cs, &p, &m).unwrap().total_ug;
        prop_assert!((b - k * a).abs() < 1e-9 * (1.0 + b.abs()));
    }
}
