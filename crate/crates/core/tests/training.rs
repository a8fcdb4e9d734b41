use fmpinn::loss::LossBreakdown;
use fmpinn::network::NetworkConfig;
use fmpinn::problems::example_1d_two_scale;
use fmpinn::trainer::{Observer, TrainConfig, Trainer};

#[derive(Default)]
struct Losses(Vec<f64>);

impl Observer for Losses {
    fn epoch(&mut self, _epoch: u64, loss: &LossBreakdown, _lr: f64) {
        self.0.push(loss.total);
    }
}

fn tiny() -> (NetworkConfig, TrainConfig) {
    let mut net = NetworkConfig::fmpinn(1);
    net.scales = vec![1.0, 2.0, 4.0];
    net.hidden = vec![12, 12];
    let train = TrainConfig {
        epochs: 2000,
        eval_every: 500,
        n_interior: Some(128),
        n_boundary: Some(8),
        seed: 3,
        ..TrainConfig::default()
    };
    (net, train)
}

#[test]
fn loss_drops_by_an_order_of_magnitude() {
    let problem = example_1d_two_scale(0.5).unwrap();
    let (net, cfg) = tiny();
    let mut losses = Losses::default();
    let out = Trainer::new(&problem, net, cfg).unwrap().run(&mut losses).unwrap();
    assert_eq!(losses.0.len(), 2000);
    let start = losses.0[..10].iter().sum::<f64>() / 10.0;
    let end = losses.0[losses.0.len() - 50..].iter().sum::<f64>() / 50.0;
    assert!(end * 10.0 <= start, "{start} -> {end}");
    let rows = &out.record.rows;
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), [500, 1000, 1500, 2000]);
    assert_eq!(out.record.final_rel, Some(rows[3].rel));
    assert!(rows[3].rel < rows[0].rel.max(0.5));
}

#[test]
fn resuming_from_a_checkpoint_restores_the_parameters() {
    let problem = example_1d_two_scale(0.5).unwrap();
    let (net, mut cfg) = tiny();
    cfg.epochs = 20;
    cfg.eval_every = 10;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    let trainer = Trainer::new(&problem, net, cfg).unwrap().with_checkpoint(path.clone(), false);
    let out = trainer.run(&mut Losses::default()).unwrap();
    let loaded = fmpinn::network::load_checkpoint(&path, trainer.network()).unwrap();
    assert_eq!(loaded.as_slice(), out.params.as_slice());
}
