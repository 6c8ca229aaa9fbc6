pub mod finabel;
pub mod linalg;
pub mod obar;
pub mod modsym;
pub mod orbclass;
pub mod equivariant;
