use vltrack::bench::metrics::iou;
use vltrack::bench::{generate_sequence, Difficulty};
use vltrack::numerics::OptimHyper;
use vltrack::pipeline::train::TrainSample;
use vltrack::pipeline::{box_frame_to_search, crop_region, LrSchedule, Tracker, TrackerConfig};
use vltrack::seqtok::BBox;
use vltrack::textenc::TextVocab;

fn sample(cfg: &TrackerConfig, frame: &vltrack::image::Image, gt: &BBox, around: &BBox, caption: &str) -> TrainSample {
    let (template, _) = crop_region(frame, gt, cfg.template_factor, cfg.template_size).unwrap();
    let (search, t) = crop_region(frame, around, cfg.search_factor, cfg.search_size).unwrap();
    let s = cfg.search_extent();
    TrainSample {
        template,
        search,
        caption: caption.to_string(),
        target: box_frame_to_search(gt, &t).unwrap().clamp_to(s, s),
    }
}

#[test]
fn single_sample_loss_decreases_monotonically() {
    let cfg = TrackerConfig::toy();
    let seq = generate_sequence("s", 3, Difficulty::Easy, 128, 2).unwrap();
    let mut tracker = Tracker::new(cfg.clone(), TextVocab::build(&[seq.caption.as_str()]).unwrap()).unwrap();
    let batch = [sample(&cfg, &seq.frames[0], &seq.boxes[0], &seq.boxes[0], &seq.caption)];
    let schedule = LrSchedule { base: 1e-3, warmup: 10, total: 10_000 };
    let mut losses = Vec::new();
    for step in 0..80 {
        let hyper = OptimHyper { learning_rate: schedule.at(step), ..OptimHyper::default() };
        losses.push(tracker.train_step(&batch, &hyper).unwrap().loss);
    }
    let after_warmup = &losses[10..];
    for w in after_warmup.windows(2) {
        assert!(w[1] < w[0], "loss went up: {losses:?}");
    }
    assert!(losses[79] < 0.5 * losses[0], "{losses:?}");
}

#[test]
fn overfit_model_holds_a_static_target() {
    let cfg = TrackerConfig::toy();
    let seq = generate_sequence("s", 11, Difficulty::Easy, 128, 1).unwrap();
    let (frame, gt) = (&seq.frames[0], seq.boxes[0]);
    let mut tracker = Tracker::new(cfg.clone(), TextVocab::build(&[seq.caption.as_str()]).unwrap()).unwrap();
    // the search window follows the prediction, so teach small offsets too
    let offsets = [(0.0, 0.0), (1.5, 0.0), (-1.5, 0.0), (0.0, 1.5), (0.0, -1.5), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    let batch: Vec<TrainSample> = offsets
        .iter()
        .map(|&(dx, dy)| sample(&cfg, frame, &gt, &gt.translate(dx, dy), &seq.caption))
        .collect();
    let schedule = LrSchedule { base: 1e-3, warmup: 20, total: 10_000 };
    for step in 0..1500 {
        let hyper = OptimHyper { learning_rate: schedule.at(step), ..OptimHyper::default() };
        let s = tracker.train_step(&batch, &hyper).unwrap();
        if s.accuracy == 1.0 && s.loss < 0.02 {
            break;
        }
    }
    let frames = vec![frame.clone(); 12];
    let boxes = tracker.track_video(&frames, &seq.caption, &gt).unwrap();
    assert_eq!(boxes.len(), 12);
    for (t, b) in boxes.iter().enumerate() {
        let v = iou(b, &gt);
        assert!(v >= 0.8, "frame {t}: IoU {v:.3}, box {:?} vs {:?}", b.xywh(), gt.xywh());
    }
}
