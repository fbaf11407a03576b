#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

namespace survfuse {

// Scalar 3-d image. Data is stored (D, H, W) with W fastest; the on-disk
// sidecar uses the same axis order. CT is in HU, PET in SUV, fused unitless.
struct Volume {
    std::array<long, 3> shape{0, 0, 0};  // (D, H, W)
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::vector<double> data;

    long size() const { return shape[0] * shape[1] * shape[2]; }
    double& at(long d, long h, long w) { return data[(d * shape[1] + h) * shape[2] + w]; }
    double at(long d, long h, long w) const { return data[(d * shape[1] + h) * shape[2] + w]; }
    void validate() const;  // throws DataError
};

// Half-open voxel index ranges [min, max) stored in (D, H, W) axis order.
// The CSV interface is (x, y, z) = (W, H, D).
struct BoundingBox {
    std::array<long, 3> min{0, 0, 0};
    std::array<long, 3> max{0, 0, 0};

    std::array<long, 3> extent() const {
        return {max[0] - min[0], max[1] - min[1], max[2] - min[2]};
    }
};

// Raw little-endian 32-bit floats plus a JSON sidecar with shape/spacing/origin.
Volume load_volume(const std::string& data_path, const std::string& sidecar_path);
void save_volume(const Volume& v, const std::string& data_path, const std::string& sidecar_path);

// Extracts the box region then re-centers it onto the target shape, padding
// with zeros (or trimming) as needed; an odd margin puts the extra voxel on
// the low side when trimming and the extra zero on the low side when padding.
Volume crop_to_box(const Volume& v, const BoundingBox& box,
                   std::array<long, 3> target_dhw = {144, 144, 144});

enum class NormalizeMethod { MinMax, ZScore };

// minmax: (x - min)/(max - min) into [0, 1]; zscore: (x - mean)/sd.
// A constant volume maps to all zeros under either method.
Volume normalize(const Volume& v, NormalizeMethod method = NormalizeMethod::MinMax);

// elementwise mean of two same-shape volumes; metadata copied from ct
Volume fuse(const Volume& ct, const Volume& pet);

// Crop centered on the volume center. Target is given as (W, H, D); an odd
// remainder removes the extra voxel from the low side.
Volume center_crop(const Volume& v, std::array<long, 3> target_whd = {80, 80, 50});

// CSV `PatientID,x1,y1,z1,x2,y2,z2` in voxel indices, half-open
std::map<std::string, BoundingBox> load_bounding_boxes(const std::string& csv_path);

}  // namespace survfuse
