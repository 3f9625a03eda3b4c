#ifndef CONVEXFEM_IO_HPP
#define CONVEXFEM_IO_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "convexfem/conic.hpp"
#include "convexfem/fem.hpp"

namespace convexfem {

struct RasterImage {
  int width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> samples;  // row-major, interleaved channels

  std::uint8_t& at(int x, int y, int c = 0) {
    return samples[(y * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return samples[(y * width + x) * channels + c];
  }
};

/// Binary PGM (P5) / PPM (P6), maxval 255.
RasterImage read_image(std::istream& in);
void write_image(const RasterImage& img, std::ostream& out);

/// Legacy ASCII VTK unstructured grid. CG1 fields are written as point data;
/// every other space is sampled at cell centroids and written as cell data.
struct NamedField {
  std::string name;
  DiscreteField field;
};
void write_vtk(const TriMesh& mesh, const std::vector<NamedField>& fields,
               std::ostream& out);

/// Text interchange for flat conic programs (17 significant digits, so a
/// roundtrip reproduces the numbers exactly).
void export_program(const StandardConicProgram& program, std::ostream& out);
StandardConicProgram import_program(std::istream& in);

/// Write-then-rename so partially written files never appear.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace convexfem

#endif
