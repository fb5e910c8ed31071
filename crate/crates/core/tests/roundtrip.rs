use tagrec_core::engine::{run_cycle, FeedbackState, ItemIndex};
use tagrec_core::synth::{generate, SynthConfig};
use tagrec_core::{Corpus, CycleSettings};

#[test]
fn exported_csv_ingests_to_the_same_corpus() {
    let planted = generate(&SynthConfig {
        cold_start_users: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let paths = planted.write(tmp.path()).unwrap();
    let (corpus, report) = Corpus::ingest(&paths).unwrap();
    assert_eq!(corpus, planted.corpus);
    assert_eq!(report.loans.rejects.len(), 0);

    let settings = CycleSettings::default();
    let a = run_cycle(
        &corpus,
        &ItemIndex::build(&corpus, &settings.text),
        &FeedbackState::new(),
        &settings,
    )
    .unwrap();
    let b = run_cycle(
        &planted.corpus,
        &ItemIndex::build(&planted.corpus, &settings.text),
        &FeedbackState::new(),
        &settings,
    )
    .unwrap();
    assert_eq!(a.lists_json(), b.lists_json());
}
