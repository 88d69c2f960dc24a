//! Turns a noisy binary hand-contact signal into interaction windows.

use artikit::segmenter::{match_segments, moving_average, segment_signal, Segment, SegmenterConfig};

fn main() {
    let mut d = vec![false; 300];
    for (a, b) in [(10, 29), (50, 99), (120, 229), (250, 289)] {
        d[a..=b].iter_mut().for_each(|x| *x = true);
    }
    // A few dropouts inside the long contact.
    for t in [60, 61, 140, 141, 142] {
        d[t] = false;
    }

    let cfg = SegmenterConfig::default();
    let smoothed = moving_average(&d, cfg.w_h);
    println!("smoothed signal at t=60: {:.2}", smoothed[60]);

    let found = segment_signal(&d, &cfg);
    for s in &found {
        println!("segment [{}, {}] ({} frames)", s.start, s.end, s.len());
    }

    let truth = [Segment::new(50, 99), Segment::new(250, 289)];
    for (p, g) in match_segments(&found, &truth) {
        println!("pred {p} matches truth {g}: IoU {:.2}", found[p].iou(&truth[g]));
    }
}
