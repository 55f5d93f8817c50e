use tridg::refelem::warp_blend_nodes;
use tridg::mesh::Mesh;

fn main() {
    println!("p_map=1 nodes: {:?}", warp_blend_nodes(1).unwrap());
    // Vertex (0.5, 0.25) should warp to (0.64142, 0.54939)
    let mesh = Mesh::split_cartesian(8, 1.0, 1).unwrap().warped().unwrap();
    // Find element containing that vertex pre-warp: square col=4,row=2 lower tri has
    // vertices (0.5,0.25),(0.625,0.25),(0.625,0.375): element index (row*8+col)*2 = (2*8+4)*2 = 40
    let pts = mesh.map_points(40, &[[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]);
    println!("elem 40 vertices: {:?}", pts);
    let s2 = (std::f64::consts::PI * 0.25).sin();
    println!("expected first: [{}, {}]", 0.5 + 0.2 * s2, 0.25 + 0.2 * (0.75f64).exp() * s2);
}
