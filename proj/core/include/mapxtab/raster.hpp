#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mapxtab/legend.hpp"

namespace mapxtab {

inline constexpr std::uint32_t kDefaultTileSize = 1024;

/// On-disk container variants. Binary is `CMAP 1 ...` followed by
/// little-endian codes; Ascii is `CMAPA 1 ...` followed by decimal codes.
enum class RasterEncoding { Binary, Ascii };

struct RasterHeader {
  RasterEncoding encoding = RasterEncoding::Binary;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  ClassCode nodata = 0;
  unsigned codeWidth = 1;  // bytes per code: 1, 2 or 4

  /// The exact header line, newline included.
  std::string line() const;
};

/// Parses one header line (without the newline).
RasterHeader parseRasterHeader(const std::string& line);

/// Pixel rectangle; edge tiles are ragged, never padded.
struct Window {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  std::uint64_t area() const noexcept { return std::uint64_t{width} * height; }
  bool operator==(const Window&) const = default;
};

class TileGrid {
 public:
  TileGrid(std::uint32_t rasterWidth, std::uint32_t rasterHeight, std::uint32_t tileWidth,
           std::uint32_t tileHeight);

  std::uint32_t tileWidth() const noexcept { return tileWidth_; }
  std::uint32_t tileHeight() const noexcept { return tileHeight_; }
  std::uint32_t tilesX() const noexcept { return tilesX_; }
  std::uint32_t tilesY() const noexcept { return tilesY_; }
  std::uint64_t tileCount() const noexcept { return std::uint64_t{tilesX_} * tilesY_; }

  /// Throws ValidationError when (tx, ty) is outside the grid.
  Window window(std::uint32_t tx, std::uint32_t ty) const;

 private:
  std::uint32_t rasterWidth_;
  std::uint32_t rasterHeight_;
  std::uint32_t tileWidth_;
  std::uint32_t tileHeight_;
  std::uint32_t tilesX_;
  std::uint32_t tilesY_;
};

/// Caller-owned block of row-major codes.
struct Tile {
  Window window;
  std::vector<ClassCode> data;

  ClassCode at(std::uint32_t col, std::uint32_t row) const {
    return data[std::size_t{row} * window.width + col];
  }
};

struct AlignmentReport {
  bool sameDimensions = false;
  std::uint64_t pixelCount = 0;
  std::string notes;
};

/// A categorical grid read lazily, window by window. Copies share the
/// underlying source; the raster is immutable and safe to read from several
/// threads at once.
class CategoricalRaster {
 public:
  class Source;

  /// In-memory raster. `codes` is row-major, width*height long.
  static CategoricalRaster fromCodes(std::uint32_t width, std::uint32_t height, ClassCode nodata,
                                     unsigned codeWidth, std::vector<ClassCode> codes,
                                     LegendPtr legend);

  std::uint32_t width() const noexcept { return header_.width; }
  std::uint32_t height() const noexcept { return header_.height; }
  ClassCode nodata() const noexcept { return header_.nodata; }
  unsigned codeWidth() const noexcept { return header_.codeWidth; }
  const RasterHeader& header() const noexcept { return header_; }
  std::uint64_t pixelCount() const noexcept { return std::uint64_t{width()} * height(); }

  /// Null for rasters opened without a legend (format conversion only).
  const LegendPtr& legend() const noexcept { return legend_; }

  /// Same pixels, validated against another legend.
  CategoricalRaster withLegend(LegendPtr legend) const;

  TileGrid grid(std::uint32_t tileWidth, std::uint32_t tileHeight) const {
    return TileGrid(width(), height(), tileWidth, tileHeight);
  }

  Tile readTile(const TileGrid& grid, std::uint32_t tx, std::uint32_t ty) const;
  Tile readWindow(const Window& window) const;

  /// Fills `out` (window.area() codes) without allocating.
  void readWindowInto(const Window& window, std::span<ClassCode> out) const;

  /// Whole grid in one buffer; for oracles, conversion and small fixtures.
  std::vector<ClassCode> readAll() const;

  /// Pixels decoded so far across all copies of this raster.
  std::uint64_t pixelsDecoded() const noexcept { return decoded_->load(std::memory_order_relaxed); }
  void resetPixelsDecoded() const noexcept { decoded_->store(0, std::memory_order_relaxed); }

 private:
  friend CategoricalRaster openRaster(const std::filesystem::path&, LegendPtr);

  CategoricalRaster(RasterHeader header, std::shared_ptr<const Source> source, LegendPtr legend);

  RasterHeader header_;
  std::shared_ptr<const Source> source_;
  LegendPtr legend_;
  std::shared_ptr<const CodeLookup> lookup_;
  std::shared_ptr<std::atomic<std::uint64_t>> decoded_;
};

/// Parses the header only; no pixel payload is loaded. With a non-null
/// legend every pixel read is checked to be nodata or a legend code.
CategoricalRaster openRaster(const std::filesystem::path& path, LegendPtr legend);

/// Streams `raster` to `path` one strip of rows at a time.
void writeRaster(const std::filesystem::path& path, const CategoricalRaster& raster,
                 RasterEncoding encoding, std::uint32_t stripRows = 256);

/// Grid identity only: same width and height. Geolocation is not inspected.
AlignmentReport validateAlignment(const CategoricalRaster& a, const CategoricalRaster& b);

}  // namespace mapxtab
