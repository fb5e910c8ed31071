use std::collections::BTreeSet;

use tagrec_core::engine::{run_cycle, sweep, FeedbackState, HistoryMode, ItemIndex};
use tagrec_core::evaluate::standard_grid;
use tagrec_core::synth::{generate, SynthConfig};
use tagrec_core::{CycleSettings, ItemKind};

#[test]
fn planted_grouping_wins_the_standard_grid() {
    let planted = generate(&SynthConfig::default()).unwrap();
    let settings = CycleSettings::default();
    let index = ItemIndex::build(&planted.corpus, &settings.text);
    let rows = sweep(
        &planted.corpus,
        &index,
        &FeedbackState::new(),
        &settings,
        &standard_grid(),
        HistoryMode::SameWindow,
    )
    .unwrap();
    let (best, rest): (Vec<_>, Vec<_>) = rows
        .iter()
        .partition(|r| r.config.grid_key() == planted.truth.planted_grouping.grid_key());
    assert_eq!(best.len(), 1);
    let best = best[0];
    assert_eq!(best.report.f_score, 1.0, "{:?}", best.counts);
    for r in rest {
        assert!(
            r.report.f_score < best.report.f_score,
            "{} ties the planted grouping at {:.4}",
            r.config,
            r.report.f_score
        );
    }
}

#[test]
fn planted_grouping_recovers_exactly_the_borrowed_books() {
    let planted = generate(&SynthConfig::default()).unwrap();
    let settings = CycleSettings {
        grouping: planted.truth.planted_grouping,
        ..Default::default()
    };
    let index = ItemIndex::build(&planted.corpus, &settings.text);
    let out = run_cycle(&planted.corpus, &index, &FeedbackState::new(), &settings).unwrap();
    for (user, books) in &planted.truth.borrowed {
        let listed: BTreeSet<String> = out.lists[user]
            .items
            .iter()
            .filter(|i| i.item_kind == ItemKind::Book)
            .map(|i| i.item_id.clone())
            .collect();
        assert_eq!(&listed, books, "{user}");
        assert!(listed.is_disjoint(&planted.truth.distractors[user]));
    }
}
