mod common;

use common::{build, golden_dir, golden_fixtures, golden_graph};
use wikirace_core::game::{Game, GameConfig, SYSTEM_PROMPT};
use wikirace_core::graph::{DistanceCache, PageId};
use wikirace_core::tasks::{Split, TaskInstance};

const HAND_WRITTEN: &str = "You are playing a game where you start at Wikipedia page \"N0\" and want to reach page \"N3\" by clicking links.

So far, you have visited the following pages in order:
N0

You see the following possible links from the current page:

0. N2
1. N1

Which link should you click to get closer to the target? Reply with the number of your choice (0 to 1).";

#[test]
fn small_prompt_matches_hand_written_text() {
    let g = build(4, &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 0)]);
    let cache = DistanceCache::new(&g);
    let task = TaskInstance {
        source: PageId(0),
        target: PageId(3),
        optimal_length: 2,
        split: Split::Custom,
        snapshot: "s".into(),
    };
    let field = cache.get(PageId(3)).unwrap();
    // Seed picked so the shuffle swaps the two links.
    let seed = (0..100)
        .find(|&s| {
            let game = Game::new(task.clone(), GameConfig::default().with_seed(s), &g, &field).unwrap();
            game.presented() == [PageId(2), PageId(1)]
        })
        .unwrap();
    let game = Game::new(task, GameConfig::default().with_seed(seed), &g, &field).unwrap();
    let obs = game.observation(&g);
    assert_eq!(obs.user_text, HAND_WRITTEN);
    assert_eq!(obs.system_text, "You are a helpful assistant helping play the Wikipedia link game.");
    assert_eq!(SYSTEM_PROMPT, obs.system_text);
}

#[test]
fn prompts_match_golden_files() {
    let g = golden_graph();
    let cache = DistanceCache::new(&g);
    let dir = golden_dir();
    let bless = std::env::var_os("WIKIRACE_BLESS").is_some();
    for (name, text) in golden_fixtures(&g, &cache) {
        let path = dir.join(&name);
        if bless {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, want, "{name} differs from the golden file");

        let max = text.lines().filter(|l| l.split_once(". ").is_some_and(|(i, _)| i.parse::<usize>().is_ok())).count() - 1;
        assert!(text.ends_with(&format!("Reply with the number of your choice (0 to {max}).")));
        assert!(max < 50);
    }
}
