//! Runs a bot against a scenario and checks the scenario's expectations.

use crate::bot::{Bot, BotError};
use crate::dataset::DatasetRecord;
use crate::store::{AnnotationStore, StoreSnapshot};
use crate::transport::{Expectations, Scenario, SimReport, Simulator, Transport};

/// Feeds every scenario event to the bot until the script is exhausted.
pub fn run_scenario<S: AnnotationStore>(scenario: &Scenario, bot: &mut Bot<S>) -> Result<SimReport, BotError> {
    let mut sim = Simulator::new(scenario);
    while let Some(env) = sim.next_event()? {
        bot.handle(&env, &mut sim)?;
    }
    Ok(sim.into_report())
}

/// Mismatches between the expectations and the outcome, one line each.
pub fn check_expectations<S: AnnotationStore>(
    expect: &Expectations,
    bot: &Bot<S>,
    snap: &StoreSnapshot,
    records: &[DatasetRecord],
) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |what: &str, want: Option<usize>, got: usize| {
        if let Some(want) = want {
            if want != got {
                out.push(format!("{what}: expected {want}, got {got}"));
            }
        }
    };
    let stored = snap.messages.iter().filter(|m| !m.redacted).count();
    check("stored messages", expect.stored_messages, stored);
    check("annotations", expect.annotations, snap.annotations.len());
    check(
        "labeled sentences",
        expect.labeled_sentences,
        records.iter().filter(|r| r.label.is_some()).count(),
    );
    for (room, want) in &expect.states {
        let got = bot.state(room);
        if got != Some(*want) {
            out.push(format!("room {room}: expected {want:?}, got {got:?}"));
        }
    }
    out
}
