/// Huber loss with delta 1 on `e = pred - target`: `0.5 e^2` inside the unit
/// band, `|e| - 0.5` outside. Returns the loss and `dL/dpred`.
pub fn huber(pred: f64, target: f64) -> (f64, f64) {
    let e = pred - target;
    if e.abs() <= 1.0 {
        (0.5 * e * e, e)
    } else {
        (e.abs() - 0.5, e.signum())
    }
}
