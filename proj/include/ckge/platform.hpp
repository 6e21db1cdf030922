#pragma once

namespace ckge {

// Keeps freed heap memory mapped. Training allocates and frees many
// mid-sized matrices per step; without this glibc returns them to the
// kernel each time and page faults dominate. No-op off glibc.
void configure_allocator();

}  // namespace ckge
