//! Gantt chart of an executed schedule as SVG, plus a plain-text table.

use std::fmt::Write;

use crate::env::{EpisodeRecord, EventKind, ScheduleEvent};
use crate::error::{Error, Result};

const LANE_H: f64 = 28.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 20.0;
const WIDTH: f64 = 900.0;

fn job_color(job: usize) -> String {
    // golden-angle hue walk keeps neighbouring jobs distinguishable
    let hue = (job as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},60%,62%)")
}

/// Idle gaps on each lane between time 0 and the makespan.
fn idle_gaps(rec: &EpisodeRecord, robot: usize) -> Vec<(f64, f64)> {
    let mut iv: Vec<(f64, f64)> = rec
        .schedule
        .iter()
        .filter(|e| e.robot == robot)
        .map(|e| (e.start, e.end))
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = Vec::new();
    let mut t = 0.0;
    for (s, e) in iv {
        if s > t + 1e-9 {
            gaps.push((t, s));
        }
        t = f64::max(t, e);
    }
    if rec.makespan > t + 1e-9 {
        gaps.push((t, rec.makespan));
    }
    gaps
}

pub fn emit_gantt(rec: &EpisodeRecord, robots: usize, title: &str) -> Result<String> {
    if rec.schedule.is_empty() {
        return Err(Error::Empty("schedule"));
    }
    let horizon = rec
        .schedule
        .iter()
        .map(|e| e.end)
        .fold(rec.makespan, f64::max)
        .max(1e-9);
    let sx = WIDTH / horizon;
    let height = TOP + LANE_H * robots as f64 + 40.0;
    let mut svg = String::new();
    let w = &mut svg;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#,
        LEFT + WIDTH + 20.0
    )
    .unwrap();
    writeln!(w, "<title>{}</title>", escape(title)).unwrap();
    w.push_str(concat!(
        r#"<defs><pattern id="repair" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
        r##"<rect width="6" height="6" fill="#f4d0d0"/><line x1="0" y1="0" x2="0" y2="6" stroke="#b03030" stroke-width="2"/></pattern>"##,
        r#"<pattern id="idle" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
        r##"<line x1="0" y1="0" x2="0" y2="6" stroke="#c8c8c8" stroke-width="1"/></pattern></defs>"##,
        "\n"
    ));
    for k in 0..robots {
        let y = TOP + LANE_H * k as f64;
        writeln!(w, r#"<text x="4" y="{:.1}">robot {k}</text>"#, y + LANE_H * 0.6).unwrap();
        for (s, e) in idle_gaps(rec, k) {
            writeln!(
                w,
                r#"<rect class="idle" x="{:.2}" y="{:.1}" width="{:.2}" height="{:.1}" fill="url(#idle)"/>"#,
                LEFT + s * sx,
                y + 3.0,
                (e - s) * sx,
                LANE_H - 6.0
            )
            .unwrap();
        }
    }
    for e in &rec.schedule {
        let y = TOP + LANE_H * e.robot as f64;
        let (class, fill) = match e.kind {
            EventKind::Operation => ("op", job_color(e.job)),
            EventKind::Repair => ("repair", "url(#repair)".to_string()),
        };
        writeln!(
            w,
            r##"<rect class="{class}" x="{:.2}" y="{:.1}" width="{:.2}" height="{:.1}" fill="{fill}" stroke="#333" stroke-width="0.5"><title>job {} stage {} [{:.2}, {:.2}] s, {:.2} J</title></rect>"##,
            LEFT + e.start * sx,
            y + 3.0,
            ((e.end - e.start) * sx).max(0.5),
            LANE_H - 6.0,
            e.job,
            e.stage,
            e.start,
            e.end,
            e.energy
        )
        .unwrap();
    }
    let axis_y = TOP + LANE_H * robots as f64 + 8.0;
    writeln!(
        w,
        r##"<line x1="{LEFT}" y1="{axis_y:.1}" x2="{:.1}" y2="{axis_y:.1}" stroke="#000"/>"##,
        LEFT + WIDTH
    )
    .unwrap();
    let step = nice_step(horizon / 8.0);
    let mut t = 0.0;
    while t <= horizon + 1e-9 {
        let x = LEFT + t * sx;
        writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{axis_y:.1}" x2="{x:.2}" y2="{:.1}" stroke="#000"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{t}</text>"##,
            axis_y + 4.0,
            axis_y + 16.0
        )
        .unwrap();
        t += step;
    }
    writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">time [s]</text>"#, LEFT + WIDTH, axis_y + 30.0).unwrap();
    w.push_str("</svg>\n");
    Ok(svg)
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fixed-width table of all schedule events in start order.
pub fn schedule_table(rec: &EpisodeRecord) -> String {
    let mut events: Vec<&ScheduleEvent> = rec.schedule.iter().collect();
    events.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.robot.cmp(&b.robot)));
    let mut out = String::from("robot  job  stage  kind       start       end    energy\n");
    for e in events {
        let kind = match e.kind {
            EventKind::Operation => "operation",
            EventKind::Repair => "repair",
        };
        writeln!(
            out,
            "{:>5} {:>4} {:>6}  {:<9} {:>9.3} {:>9.3} {:>9.3}",
            e.robot, e.job, e.stage, kind, e.start, e.end, e.energy
        )
        .unwrap();
    }
    out
}
