//! Boxes to coordinate tokens and back, for both box layouts and a few bin
//! counts.

use vltrack::seqtok::{box_to_tokens, tokens_to_box, BBox, BoxFormat, TokenVocab};

fn main() -> vltrack::Result<()> {
    let s = 384.0;
    let gt = BBox::from_xywh(100.3, 50.9, 100.0, 100.0);
    for bins in [10, 100, 1000] {
        let vocab = TokenVocab::new(bins)?;
        for format in [BoxFormat::Corner, BoxFormat::Center] {
            let b = gt.to_format(format);
            let tokens = box_to_tokens(&b, s, &vocab)?;
            let back = tokens_to_box(&tokens, s, &vocab, format)?;
            println!(
                "K={bins:<5} {format:<7} tokens={tokens:?} eos={} back(xywh)={:.2?}",
                vocab.eos(),
                back.xywh()
            );
        }
    }
    Ok(())
}
