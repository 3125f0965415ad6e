//! One block alternating between leading and following accesses, with the
//! filter and reservation switched on and off. Prints the tag bits and the
//! mapping action after every access.

use dcsim::policy::{on_hit, BlockType, PolicyConfig, SetView};
use dcsim::tags::TagEntry;

fn trace(label: &str, cfg: PolicyConfig, pattern: &[BlockType]) {
    println!("{label}");
    let mut set = SetView::new(4);
    // the block sits away from its static position 0, which holds a stale
    // following block
    set.ways[0] = TagEntry::fill(100, BlockType::Following);
    set.ways[0].referenced = false;
    set.ways[2] = TagEntry::fill(7, BlockType::Following);
    let mut way = 2;
    for &t in pattern {
        let fx = on_hit(&mut set, way, 0, t, cfg);
        way = fx.way;
        let e = set.ways[way];
        println!(
            "  {:<9} way {} H {} reserved {:<5} C {}  {:?}",
            format!("{t:?}"),
            way,
            e.priority as u8,
            e.reserved,
            e.filter,
            fx.action
        );
    }
}

fn main() {
    use BlockType::*;
    let pattern = [
        Leading, Following, Leading, Following, Following, Following, Following, Leading,
    ];
    trace("filter and reservation", PolicyConfig::default(), &pattern);
    trace(
        "mapping only",
        PolicyConfig {
            filter_enabled: false,
            reservation_enabled: false,
        },
        &pattern,
    );
}
