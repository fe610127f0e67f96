use agentsim_core::cognition::{MemoryEntry, MemoryRole, MemoryStore};
use agentsim_core::TimeStep;

fn fill(store: &mut MemoryStore, n: u64, world: &str) {
    for i in 0..n {
        let role = if i % 2 == 0 { MemoryRole::Observation } else { MemoryRole::OwnAction };
        store.record(MemoryEntry::new(TimeStep(i), world, role, format!("{world} entry {i}")));
    }
}

#[test]
fn chat_history_window_five_keeps_last_five() {
    let mut store = MemoryStore::chat_history(5, 100_000);
    fill(&mut store, 12, "social");
    let shown: Vec<&str> = store.visible().iter().map(|e| e.content.as_str()).collect();
    assert_eq!(shown, ["social entry 7", "social entry 8", "social entry 9", "social entry 10", "social entry 11"]);
    assert_eq!(store.render().lines().count(), 5);
    assert_eq!(store.len(), 12);
}

#[test]
fn buffer_three_renders_three() {
    let mut store = MemoryStore::buffer(3);
    fill(&mut store, 8, "market");
    assert_eq!(store.render().lines().count(), 3);
    assert!(store.render().starts_with("[market t=5 own_action] market entry 5"));
}

#[test]
fn archive_survives_serialization_across_worlds() {
    let mut store = MemoryStore::chat_history(5, 100_000);
    fill(&mut store, 4, "market");
    let restored = MemoryStore::from_jsonl(&store.to_jsonl()).unwrap();
    assert_eq!(restored, store);
    let mut moved = restored;
    fill(&mut moved, 3, "social");
    let worlds: Vec<&str> = moved.archive().iter().map(|e| e.world_tag.as_str()).collect();
    assert_eq!(worlds, ["market", "market", "market", "market", "social", "social", "social"]);
    assert_eq!(MemoryStore::from_jsonl(&moved.to_jsonl()).unwrap(), moved);
}
