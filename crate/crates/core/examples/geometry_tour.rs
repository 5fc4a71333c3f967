//! Walks through one toric section: arc centres, tips, the arc support and
//! the section detecting a given covector.

use toric::artifacts::{detecting_angle, detecting_radius};
use toric::geometry::{Arc, ToricSection, Vec2};

fn main() -> toric::Result<()> {
    let ts = ToricSection::new(2.5, 0.3)?;
    println!("r = {}, alpha = {}, s = {:.6}", ts.r, ts.alpha, ts.s);
    for arc in Arc::BOTH {
        let (mid, half) = ts.arc_interval(arc);
        let c = ts.center(arc);
        println!(
            "{arc:?}: centre ({:.4}, {:.4}), |c| = {:.6}, beta in [{:.4}, {:.4}]",
            c.x,
            c.y,
            c.norm(),
            mid - half,
            mid + half
        );
        let near = ts.arc_point(arc, c.angle() + std::f64::consts::PI);
        println!("  closest approach to the origin {:.6} at ({:.4}, {:.4})", near.norm(), near.x, near.y);
    }
    let [detector, source] = ts.tips();
    println!("tips: ({:.4}, {:.4}) on the detector ring, ({:.4}, {:.4}) on the source ring", detector.x, detector.y, source.x, source.y);

    let w = Vec2::new(-0.5, 0.0);
    let xi = Vec2::new(-1.0, 0.0);
    let (r, xi_prime) = detecting_radius(w, xi)?;
    for arc in Arc::BOTH {
        let alpha = detecting_angle(w, xi_prime, r, arc)?;
        let theta = toric::geometry::theta(alpha);
        println!("covector at w = (-0.5, 0) along (-1, 0): r = {r}, {arc:?} alpha = {alpha:.6}, theta = ({:.6}, {:.6})", theta.x, theta.y);
    }
    Ok(())
}
