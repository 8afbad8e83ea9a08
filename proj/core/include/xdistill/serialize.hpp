#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "xdistill/networks.hpp"
#include "xdistill/semantics.hpp"
#include "xdistill/tensor.hpp"

namespace xd {

class IoError : public std::runtime_error {
 public:
  enum class Kind {
    kOpen,
    kBadMagic,
    kTruncated,
    kDimOverflow,
    kNameCollision,
    kShapeMismatch,
    kBadValue,
  };

  IoError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace io {

// "XDT1": magic, u32 LE rank, rank u32 LE dims, raw f32 LE row-major data
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// "XDL1": same header, u8 payload; num_classes is supplied by the caller
// since the grid does not carry it
void write_labels(const std::string& path, const SegmentationMap& map);
SegmentationMap read_labels(const std::string& path, int num_classes);

// ordered records of (u32 LE name length, utf8 name, XDT1 blob); EOF ends it
void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> read_checkpoint(const std::string& path);
// copies matching names into targets; missing name or shape mismatch -> error
void load_checkpoint_into(const std::string& path, const std::vector<NamedTensor>& targets);

// plain-text P2 (1 channel) / P3 (3 channels), maxval 255, input clamped [0,1]
void export_image(const std::string& path, const Tensor& t);
// depth rendered as normalized inverse depth (near = bright)
void export_depth_pixmap(const std::string& path, const Tensor& depth);

}  // namespace io
}  // namespace xd
