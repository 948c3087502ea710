//! Drops users in a two-domain deployment and prints the strongest links.

use cran_ua::scenario::{advance_mobility, generate_scenario, snr_of_user, DeploymentConfig};

fn main() -> cran_ua::Result<()> {
    let cfg = DeploymentConfig::new(2, 2, 4, 4).with_seed(2024);
    let s = generate_scenario(&cfg)?;
    println!("area {:?} m, {} antennas per domain", s.area_size(), s.domain_antennas());
    for (d, heads) in s.rrh_positions.iter().enumerate() {
        println!("domain {d} radio-heads: {heads:?}");
    }
    for u in 0..s.total_users() {
        let gains: Vec<String> = (0..s.num_domains).map(|k| format!("{:.1} dB", 10.0 * s.channel_gain(k, u).log10())).collect();
        let user = &s.users[u];
        println!(
            "user {u:2} in domain {} at ({:5.1}, {:5.1}), {:4.1} km/h, gains [{}], snr {:.0} dB",
            user.initial_domain,
            user.position.x,
            user.position.y,
            user.speed_mps * 3.6,
            gains.join(", "),
            10.0 * snr_of_user(&s, &cfg, u).log10()
        );
    }

    let later = advance_mobility(&s, &cfg, 500.0);
    let moved: f64 = (0..s.total_users()).map(|u| s.users[u].position.distance(&later.users[u].position)).sum();
    println!("after 500 ms the users moved {moved:.2} m in total");
    Ok(())
}
