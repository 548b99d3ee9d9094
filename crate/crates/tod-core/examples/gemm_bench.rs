use ndarray::Array2;
use std::time::Instant;

fn bench(m: usize, k: usize, n: usize, iters: usize) {
    let a = Array2::<f32>::from_elem((m, k), 0.5);
    let b = Array2::<f32>::from_elem((k, n), 0.25);
    let t = Instant::now();
    let mut acc = 0.0f32;
    for _ in 0..iters {
        let c = a.dot(&b);
        acc += c[[0, 0]];
    }
    let secs = t.elapsed().as_secs_f64();
    let flops = 2.0 * m as f64 * k as f64 * n as f64 * iters as f64;
    println!("{}x{}x{}: {:.2} GFLOPS (acc {})", m, k, n, flops / secs / 1e9, acc);
}

fn main() {
    bench(256, 128, 128, 2000);
    bench(256, 128, 512, 800);
    bench(256, 128, 900, 400);
    bench(64, 64, 64, 20000);
    bench(1, 128, 900, 20000);
}
