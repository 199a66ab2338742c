use std::io::BufReader;

use ntklab::kernels::{analytic_ntk_gnn, io as kio, Activation, ArchSpec};
use ntklab::netsim::{generate_gaussian_nodes, generate_instances, io as dio};
use ntklab::nets::{checkpoint, Input, Model, PowerMlp, TwoLayerNet, WcgcnNet};

#[test]
fn kernel_text_round_trip_is_exact() {
    let x = generate_gaussian_nodes(20, 3, 2, 5).unwrap().flattened();
    let k = analytic_ntk_gnn(&x, 2, Activation::Relu).unwrap();
    let mut buf = Vec::new();
    kio::write_text(&k, &mut buf).unwrap();
    let back = kio::read_text(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.entries(), k.entries());
}

#[test]
fn dataset_round_trip_is_exact() {
    let ds = generate_instances(4, 6, 11).unwrap();
    let mut buf = Vec::new();
    dio::write_dataset(&ds, &mut buf).unwrap();
    let back = dio::read_dataset(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.users, ds.users);
    assert_eq!(back.samples.len(), ds.samples.len());
    for (a, b) in back.samples.iter().zip(&ds.samples) {
        assert_eq!(a.instance, b.instance);
    }
}

fn round_trip<N: checkpoint::Checkpoint + Model>(net: &N) -> N {
    let mut buf = Vec::new();
    checkpoint::save(net, &mut buf).unwrap();
    let back: N = checkpoint::load(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.params(), net.params());
    back
}

#[test]
fn checkpoints_restore_every_parameter() {
    let ds = generate_instances(5, 2, 3).unwrap();
    let input = Input::Network(&ds.samples[0]);

    let g = WcgcnNet::new(8, 2, 4).unwrap();
    assert_eq!(round_trip(&g).forward(&input).unwrap(), g.forward(&input).unwrap());

    let m = PowerMlp::for_users(5, &[16, 8], 4).unwrap();
    assert_eq!(round_trip(&m).forward(&input).unwrap(), m.forward(&input).unwrap());

    let t = TwoLayerNet::init(ArchSpec::perm_inv(3, 2, Activation::Quadratic), 32, 4).unwrap();
    let v = [0.3, -0.1, 1.2, 0.5, -0.7, 0.2];
    assert_eq!(
        round_trip(&t).forward(&Input::Vector(&v)).unwrap(),
        t.forward(&Input::Vector(&v)).unwrap()
    );
}
