//! Victim selection in one 8-way set: plain CLOCK against the priority-masked
//! variant used for following-block inserts.

use dcsim::policy::{clock_victim, rv_clock_victim, BlockType, SetView};
use dcsim::tags::TagEntry;

fn show(set: &SetView) -> String {
    set.ways
        .iter()
        .map(|e| match (e.priority, e.referenced) {
            (true, true) => "H1",
            (true, false) => "H0",
            (false, true) => "f1",
            (false, false) => "f0",
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    let mut set = SetView::new(8);
    for (w, e) in set.ways.iter_mut().enumerate() {
        let t = if w % 3 == 0 {
            BlockType::Leading
        } else {
            BlockType::Following
        };
        *e = TagEntry::fill(w as u64, t);
        e.referenced = w % 2 == 0;
    }
    println!("start       [{}] hand {}", show(&set), set.hand);

    let mut plain = set.clone();
    let v = clock_victim(&mut plain);
    println!(
        "clock       [{}] hand {} -> way {v}",
        show(&plain),
        plain.hand
    );

    let mut masked = set.clone();
    let v = rv_clock_victim(&mut masked);
    println!(
        "rv-clock    [{}] hand {} -> way {v}",
        show(&masked),
        masked.hand
    );

    // with every following way referenced the mask lifts and the sweep
    // covers leading ways too
    for e in set.ways.iter_mut().filter(|e| !e.priority) {
        e.referenced = true;
    }
    println!("\nall f1      [{}] hand {}", show(&set), set.hand);
    let v = rv_clock_victim(&mut set);
    println!("rv-clock    [{}] hand {} -> way {v}", show(&set), set.hand);
}
