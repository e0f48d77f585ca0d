use proptest::prelude::*;

use counterspeech_core::analysis::{
    bootstrap_p, first_reply_share, link_impact, percentile_table, welch_t, AnalysisError, AnalysisFilter, Observation,
    Tail,
};
use counterspeech_core::{Arm, PostId, ThreadPosition};

// Expected values computed once with an independent statistics package.
#[test]
fn welch_textbook_examples() {
    let a = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
    let b = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4];
    let r = welch_t(&a, &b).unwrap();
    assert!((r.t - -2.455356398286006).abs() < 1e-12, "{}", r.t);
    assert!((r.df - 24.988529290231416).abs() < 1e-9, "{}", r.df);
    assert!((r.p - 0.021378001462866985).abs() < 1e-12, "{}", r.p);

    let a = [17.2, 20.9, 22.6, 18.1, 21.7, 21.4, 23.5, 24.2, 14.7, 21.8];
    let b = [
        21.5, 22.8, 21.0, 23.0, 21.6, 23.6, 22.5, 20.7, 23.4, 21.8, 20.7, 21.7, 21.5, 22.5, 23.6, 21.5, 22.5, 23.5,
        21.5, 21.8,
    ];
    let r = welch_t(&a, &b).unwrap();
    assert!((r.t - -1.5654335235985037).abs() < 1e-12);
    assert!((r.df - 9.904741248650831).abs() < 1e-9);
    assert!((r.p - 0.14884169660532834).abs() < 1e-12);
}

#[test]
fn welch_rejects_degenerate_input() {
    assert!(matches!(welch_t(&[1.0], &[1.0, 2.0]), Err(AnalysisError::InsufficientData(_))));
    assert!(matches!(welch_t(&[3.0, 3.0], &[3.0, 3.0, 3.0]), Err(AnalysisError::DegenerateVariance)));
}

fn exp_obs(i: usize, replies: i64, impressions: i64, has_link: bool, first: bool) -> Observation {
    Observation {
        post_id: PostId::new(format!("x{i}")),
        arm: Arm::Experimental,
        is_reply: false,
        delta_likes: 1,
        delta_impressions: impressions,
        delta_replies: replies,
        has_link,
        was_first_reply: first,
    }
}

#[test]
fn first_reply_share_on_constructed_set() {
    let mut obs: Vec<Observation> = (0..100).map(|i| exp_obs(i, 3, 1000, false, i < 39)).collect();
    // Excluded rows must not move the share.
    obs.push(exp_obs(200, 3, 5, false, true));
    obs.push(Observation { is_reply: true, ..exp_obs(201, 3, 1000, false, true) });
    obs.push(Observation { arm: Arm::Control, ..exp_obs(202, 3, 1000, false, true) });
    let f = AnalysisFilter::new(ThreadPosition::Original, 10).unwrap();
    assert_eq!(first_reply_share(&obs, &f).unwrap(), 0.39);
}

#[test]
fn link_impact_on_constructed_set() {
    let offsets = [-4, -2, 0, 2, 4];
    let mut obs = Vec::new();
    for (i, d) in offsets.iter().enumerate() {
        obs.push(exp_obs(i, 50 + d, 10_000, false, false));
        obs.push(exp_obs(10 + i, 62 + d, 10_000, true, false));
    }
    let f = AnalysisFilter::new(ThreadPosition::Original, 10).unwrap();
    let r = link_impact(&obs, &f, 2000, 9, Tail::Upper).unwrap();
    assert!((r.cg_mean - 0.005).abs() < 1e-15);
    assert!((r.eg_mean - 0.0062).abs() < 1e-15);
    assert!((r.diff_pct_of_cg.unwrap() - 24.0).abs() < 1e-9);
    assert_eq!((r.n_cg, r.n_eg), (5, 5));
    // Every linked reply beats every unlinked mean, so the upper tail is empty.
    assert_eq!(r.p_bootstrap, 0.0);
}

#[test]
fn bootstrap_tails_are_complementary_away_from_ties() {
    let control: Vec<f64> = (0..50).map(|i| (i * 37 % 101) as f64).collect();
    let lower = bootstrap_p(&control, 48.31, 5000, 4, Tail::Lower).unwrap();
    let upper = bootstrap_p(&control, 48.31, 5000, 4, Tail::Upper).unwrap();
    assert!((lower + upper - 1.0).abs() < 1e-12, "{lower} + {upper}");
}

fn nearest_rank_oracle(values: &[i64], q: f64) -> Option<i64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort();
    let n = v.len() as f64;
    // Smallest value with at least q percent of the data at or below it.
    v.iter().copied().find(|x| {
        let at_or_below = v.iter().filter(|y| *y <= x).count() as f64;
        at_or_below * 100.0 >= q * n
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn percentile_table_matches_nearest_rank(
        rows in prop::collection::vec((any::<bool>(), -50i64..500, 0i64..100_000), 1..60),
    ) {
        let obs: Vec<Observation> = rows
            .iter()
            .enumerate()
            .map(|(i, (ctrl, likes, impr))| Observation {
                post_id: PostId::new(format!("p{i}")),
                arm: if *ctrl { Arm::Control } else { Arm::Experimental },
                is_reply: false,
                delta_likes: *likes,
                delta_impressions: *impr,
                delta_replies: 0,
                has_link: false,
                was_first_reply: false,
            })
            .collect();
        let table = percentile_table(&obs).unwrap();
        let pick = |arm: Arm, f: fn(&Observation) -> i64| -> Vec<i64> {
            obs.iter().filter(|o| o.arm == arm).map(f).collect()
        };
        let qs = [0.0, 25.0, 50.0, 75.0, 100.0];
        for (row, q) in table.rows.iter().zip(qs) {
            prop_assert_eq!(row.cg_likes, nearest_rank_oracle(&pick(Arm::Control, |o| o.delta_likes), q));
            prop_assert_eq!(row.cg_impressions, nearest_rank_oracle(&pick(Arm::Control, |o| o.delta_impressions), q));
            prop_assert_eq!(row.eg_likes, nearest_rank_oracle(&pick(Arm::Experimental, |o| o.delta_likes), q));
            prop_assert_eq!(
                row.eg_impressions,
                nearest_rank_oracle(&pick(Arm::Experimental, |o| o.delta_impressions), q)
            );
        }
    }
}
