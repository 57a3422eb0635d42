//! Face images enter the engine pre-cropped. When a detector command is
//! configured it is run as `<command...> <image path>` and must print the box
//! `x y w h` (integers, pixels) on standard output; the image is cropped to
//! that box before resizing.

use std::path::Path;
use std::process::Command;

use duoauth_core::face::{resize, Image};

use crate::error::{Error, Result};
use crate::pnm::parse_pnm;

pub fn run_detector(command: &str, image_path: &Path) -> Result<(usize, usize, usize, usize)> {
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| Error::Detector("empty command".into()))?;
    let output = Command::new(program)
        .args(parts)
        .arg(image_path)
        .output()
        .map_err(|e| Error::Detector(format!("cannot run `{program}`: {e}")))?;
    if !output.status.success() {
        return Err(Error::Detector(format!("`{program}` exited with {}", output.status)));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    let nums: Vec<usize> = text.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| {
        Error::Detector(format!("expected `x y w h`, got {:?}", text.trim()))
    })?;
    match nums[..] {
        [x, y, w, h] if w > 0 && h > 0 => Ok((x, y, w, h)),
        _ => Err(Error::Detector(format!("expected `x y w h` with a non-empty box, got {:?}", text.trim()))),
    }
}

/// Reads a face image, optionally crops it with the detector, and resizes it
/// to `hw`.
pub fn load_face_image(path: &Path, hw: (usize, usize), detector: Option<&str>) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut img = parse_pnm(&bytes)?.with_source(path.display().to_string());
    if let Some(cmd) = detector {
        let (x, y, w, h) = run_detector(cmd, path)?;
        img = img.crop(x, y, w, h).map_err(|e| Error::Detector(format!("box outside the image: {e}")))?;
    }
    if (img.height(), img.width()) != hw {
        img = resize(&img, hw.0, hw.1);
    }
    Ok(img.to_rgb())
}
