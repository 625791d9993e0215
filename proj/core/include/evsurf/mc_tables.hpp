#pragma once

namespace evsurf::mc {

// Cube corners: 0=(i,j,k) 1=(i+1,j,k) 2=(i+1,j+1,k) 3=(i,j+1,k)
//               4=(i,j,k+1) 5=(i+1,j,k+1) 6=(i+1,j+1,k+1) 7=(i,j+1,k+1).
// Edge e connects kEdgeCorners[e][0] and kEdgeCorners[e][1].
inline constexpr int kEdgeCorners[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

extern const int kEdgeTable[256];
extern const int kTriTable[256][16];

}  // namespace evsurf::mc
