//! SVG rendering of scan paths.

use std::fmt::Write as _;

use crate::gaze::GazeRecording;

/// Blue (t = 0) to red (t = 1).
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t).round() as u8;
    let b = (255.0 - 215.0 * t).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// One group per recording: its path as line segments colored by time, and
/// a dot per gaze point. y grows downwards as in screen coordinates.
pub fn render_svg(recordings: &[GazeRecording], width: u32, height: u32) -> String {
    let (w, h) = (f64::from(width), f64::from(height));
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for rec in recordings {
        let pts = rec.points();
        let n = pts.len();
        let time = |i: usize| pts[i].t.unwrap_or(if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 });
        let _ = writeln!(out, r#"<g id="{}" stroke-width="1.5" fill="none">"#, escape(&rec.id));
        for i in 1..n {
            let (a, b) = (&pts[i - 1], &pts[i]);
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}"/>"#,
                a.x * w,
                a.y * h,
                b.x * w,
                b.y * h,
                ramp(0.5 * (time(i - 1) + time(i)))
            );
        }
        for (i, p) in pts.iter().enumerate() {
            let _ =
                writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#, p.x * w, p.y * h, ramp(time(i)));
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::GazePoint;

    #[test]
    fn one_group_per_recording() {
        let a = GazeRecording::new(vec![GazePoint::new(0.0, 0.0), GazePoint::new(1.0, 1.0)], "a").unwrap();
        let b = GazeRecording::new(vec![GazePoint::new(0.5, 0.5)], "b<").unwrap();
        let svg = render_svg(&[a, b], 100, 50);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<g ").count(), 2);
        assert_eq!(svg.matches("<line").count(), 1);
        assert!(svg.contains(r#"x2="100.00" y2="50.00""#));
        assert!(svg.contains("b&lt;"));
        assert_eq!(ramp(0.0), "#2840ff");
        assert_eq!(ramp(1.0), "#ff4028");
    }
}
