//! Grayscale PGM rendering and text export of log-mel spectrograms.

use super::mel::MelSpectrogram;

/// Binary P5 image, `frames` wide and `n_mels` tall with the highest band
/// on the top row. Values map linearly from the per-file minimum (0) to the
/// maximum (255); a constant spectrogram maps to 0 everywhere.
pub fn spectrogram_pgm(mel: &MelSpectrogram) -> Vec<u8> {
    let (w, h) = (mel.frames(), mel.n_mels);
    let (lo, hi) = mel
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h);
    for row in 0..h {
        let m = h - 1 - row;
        for t in 0..w {
            let v = mel.values[t * h + m];
            let level = if span > 0.0 {
                ((v - lo) / span * 255.0).round()
            } else {
                0.0
            };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// One line per mel band (band 0 first), one column per frame, values in
/// shortest round-trip form.
pub fn mel_matrix_text(mel: &MelSpectrogram) -> String {
    let mut s = String::new();
    for m in 0..mel.n_mels {
        let row: Vec<String> = (0..mel.frames())
            .map(|t| format!("{}", mel.values[t * mel.n_mels + m]))
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_end(b: &[u8]) -> usize {
        let mut lines = 0;
        for (i, &c) in b.iter().enumerate() {
            if c == b'\n' {
                lines += 1;
                if lines == 3 {
                    return i + 1;
                }
            }
        }
        panic!("no header");
    }

    #[test]
    fn constant_spectrogram_is_black() {
        let mel = MelSpectrogram::new(80, vec![-11.5; 80 * 7]).unwrap();
        let img = spectrogram_pgm(&mel);
        let start = header_end(&img);
        assert_eq!(&img[..start], b"P5\n7 80\n255\n");
        assert!(img[start..].iter().all(|&p| p == 0));
        assert_eq!(img.len() - start, 7 * 80);
    }

    #[test]
    fn extremes_map_to_full_range_with_high_bands_on_top() {
        let mut values = vec![0.0; 2 * 3];
        values[2] = 1.0; // frame 0, band 2
        values[3] = -1.0; // frame 1, band 0
        let mel = MelSpectrogram::new(3, values).unwrap();
        let img = spectrogram_pgm(&mel);
        let px = &img[header_end(&img)..];
        // rows: band 2, band 1, band 0
        assert_eq!(px, &[255, 128, 128, 128, 128, 0]);
        let text = mel_matrix_text(&mel);
        assert_eq!(text, "0 -1\n0 0\n1 0\n");
    }
}
