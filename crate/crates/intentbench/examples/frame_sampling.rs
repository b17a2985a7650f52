//! Frame selection for video prompts: uniform sampling with both endpoints,
//! everything when the clip is short, the middle frame when only one is
//! requested.
//!
//! ```bash
//! cargo run -p intentbench --example frame_sampling
//! ```

use intentbench::dataset::{resolve_frames, sample_frames};
use intentbench::types::MediaRef;

fn main() {
    let frames: Vec<String> = (0..10).map(|i| format!("frame_{i:06}.jpg")).collect();
    let media = MediaRef::video("vid_001").with_frames(frames);

    for n in [5, 3, 1, 12] {
        let picked = sample_frames(&media, n).unwrap();
        println!("n={n:2} -> {picked:?}");
    }

    // the on-disk layout is media_root/<video_id>/frame_<NNNNNN>.jpg
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("vid_002");
    std::fs::create_dir_all(&clip).unwrap();
    for i in 1..=4 {
        std::fs::write(clip.join(format!("frame_{i:06}.jpg")), b"jpeg").unwrap();
    }
    let resolved = resolve_frames(dir.path(), &MediaRef::video("vid_002")).unwrap();
    println!("\nresolved {} frames from disk:", resolved.frame_manifest.as_ref().unwrap().len());
    for frame in resolved.frame_manifest.unwrap() {
        println!("  {frame}");
    }
}
