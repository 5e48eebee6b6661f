//! Flat-colour PNG rendering of simulated screens.
//!
//! Rendered at 1/4 of the device resolution. Element labels and the state id
//! travel in PNG text chunks.

use sha2::{Digest, Sha256};

use super::{DeviceSpec, SimState, TapTarget, VisibleElement};
use crate::types::{ElementKind, StateId};

const SCALE: u32 = 4;

pub(super) fn render(
    spec: &DeviceSpec,
    state: &SimState,
    visible: &[VisibleElement<'_>],
    id: &StateId,
) -> Vec<u8> {
    let w = spec.width.div_ceil(SCALE);
    let h = spec.height.div_ceil(SCALE);
    let digest = Sha256::digest(state.screen.as_bytes());
    let background = [
        200 + digest[0] % 56,
        200 + digest[1] % 56,
        200 + digest[2] % 56,
    ];
    let mut pixels: Vec<u8> = background
        .iter()
        .copied()
        .cycle()
        .take((w * h * 3) as usize)
        .collect();
    let mut fill = |x1: u32, y1: u32, x2: u32, y2: u32, rgb: [u8; 3]| {
        for y in (y1 / SCALE)..(y2.div_ceil(SCALE)).min(h) {
            for x in (x1 / SCALE)..(x2.div_ceil(SCALE)).min(w) {
                let i = ((y * w + x) * 3) as usize;
                pixels[i..i + 3].copy_from_slice(&rgb);
            }
        }
    };
    if state.keyboard {
        fill(0, spec.height * 65 / 100, spec.width, spec.height, [90, 90, 96]);
    }
    for v in visible {
        let rgb = match (&v.target, v.kind) {
            (TapTarget::Field(_), _) => [255, 255, 255],
            (_, ElementKind::Icon) => [70, 120, 220],
            (_, ElementKind::Text) => [150, 150, 150],
        };
        fill(v.bbox.x1, v.bbox.y1, v.bbox.x2, v.bbox.y2, rgb);
    }

    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w, h);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Fast);
        encoder
            .add_text_chunk("state_id".into(), id.to_string())
            .expect("valid text chunk");
        for v in visible {
            let label = format!(
                "{} [{}, {}, {}, {}] {}",
                v.kind.as_str(),
                v.bbox.x1,
                v.bbox.y1,
                v.bbox.x2,
                v.bbox.y2,
                v.content
            );
            // tEXt is Latin-1 only
            let label: String = label.chars().map(|c| if c.is_ascii() { c } else { '?' }).collect();
            encoder
                .add_text_chunk("element".into(), label)
                .expect("valid text chunk");
        }
        let mut writer = encoder.write_header().expect("png header");
        writer.write_image_data(&pixels).expect("png data");
    }
    out
}
