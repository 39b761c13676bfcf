#include "mapxtab/raster.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "mapxtab/error.hpp"

namespace mapxtab {

namespace {

constexpr std::size_t kMaxHeaderBytes = 256;

ClassCode maxCodeFor(unsigned codeWidth) {
  return codeWidth == 4 ? std::numeric_limits<ClassCode>::max()
                        : static_cast<ClassCode>((std::uint64_t{1} << (8 * codeWidth)) - 1);
}

void checkCodeWidth(unsigned codeWidth) {
  if (codeWidth != 1 && codeWidth != 2 && codeWidth != 4)
    throw ValidationError("code width must be 1, 2 or 4 (got " + std::to_string(codeWidth) + ")");
}

class FileDescriptor {
 public:
  explicit FileDescriptor(const std::filesystem::path& path)
      : fd_(::open(path.c_str(), O_RDONLY | O_CLOEXEC)) {
    if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  ~FileDescriptor() {
    if (fd_ >= 0) ::close(fd_);
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;

  int get() const noexcept { return fd_; }

 private:
  int fd_;
};

void preadExact(int fd, void* buffer, std::size_t bytes, std::uint64_t offset) {
  auto* dst = static_cast<char*>(buffer);
  while (bytes > 0) {
    const auto n = ::pread(fd, dst, bytes, static_cast<off_t>(offset));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) throw IoError("read failed: unexpected end of file");
    dst += n;
    bytes -= static_cast<std::size_t>(n);
    offset += static_cast<std::uint64_t>(n);
  }
}

}  // namespace

// Header ---------------------------------------------------------------------

std::string RasterHeader::line() const {
  std::ostringstream out;
  out << (encoding == RasterEncoding::Binary ? "CMAP" : "CMAPA") << " 1 " << width << ' '
      << height << ' ' << nodata << ' ' << codeWidth << '\n';
  return out.str();
}

RasterHeader parseRasterHeader(const std::string& line) {
  std::istringstream in(line);
  std::string magic;
  std::string version;
  std::int64_t width = -1;
  std::int64_t height = -1;
  std::int64_t nodata = -1;
  std::int64_t codeWidth = -1;
  std::string extra;
  if (!(in >> magic >> version >> width >> height >> nodata >> codeWidth) || (in >> extra))
    throw ValidationError("malformed header: '" + line + "'");
  RasterHeader header;
  if (magic == "CMAP")
    header.encoding = RasterEncoding::Binary;
  else if (magic == "CMAPA")
    header.encoding = RasterEncoding::Ascii;
  else
    throw ValidationError("malformed header: unknown magic '" + magic + "'");
  if (version != "1") throw ValidationError("malformed header: unsupported version " + version);
  if (width < 0 || height < 0 || nodata < 0 || codeWidth < 0 ||
      width > std::numeric_limits<std::uint32_t>::max() ||
      height > std::numeric_limits<std::uint32_t>::max() ||
      nodata > std::numeric_limits<ClassCode>::max())
    throw ValidationError("malformed header: field out of range");
  if (width == 0 || height == 0) throw ValidationError("zero dimension");
  checkCodeWidth(static_cast<unsigned>(codeWidth));
  header.width = static_cast<std::uint32_t>(width);
  header.height = static_cast<std::uint32_t>(height);
  header.nodata = static_cast<ClassCode>(nodata);
  header.codeWidth = static_cast<unsigned>(codeWidth);
  if (header.nodata > maxCodeFor(header.codeWidth))
    throw ValidationError("malformed header: nodata code does not fit the code width");
  return header;
}

// TileGrid -------------------------------------------------------------------

TileGrid::TileGrid(std::uint32_t rasterWidth, std::uint32_t rasterHeight, std::uint32_t tileWidth,
                   std::uint32_t tileHeight)
    : rasterWidth_(rasterWidth),
      rasterHeight_(rasterHeight),
      tileWidth_(tileWidth),
      tileHeight_(tileHeight) {
  if (tileWidth == 0 || tileHeight == 0) throw ValidationError("tile size must be positive");
  tilesX_ = static_cast<std::uint32_t>((std::uint64_t{rasterWidth} + tileWidth - 1) / tileWidth);
  tilesY_ = static_cast<std::uint32_t>((std::uint64_t{rasterHeight} + tileHeight - 1) / tileHeight);
}

Window TileGrid::window(std::uint32_t tx, std::uint32_t ty) const {
  if (tx >= tilesX_ || ty >= tilesY_)
    throw ValidationError("tile index (" + std::to_string(tx) + ", " + std::to_string(ty) +
                          ") out of range");
  Window w;
  w.x = tx * tileWidth_;
  w.y = ty * tileHeight_;
  w.width = std::min(tileWidth_, rasterWidth_ - w.x);
  w.height = std::min(tileHeight_, rasterHeight_ - w.y);
  return w;
}

// Sources --------------------------------------------------------------------

class CategoricalRaster::Source {
 public:
  virtual ~Source() = default;
  virtual void read(const RasterHeader& header, const Window& window,
                    std::span<ClassCode> out) const = 0;
};

namespace {

class MemorySource final : public CategoricalRaster::Source {
 public:
  explicit MemorySource(std::vector<ClassCode> codes) : codes_(std::move(codes)) {}

  void read(const RasterHeader& header, const Window& window,
            std::span<ClassCode> out) const override {
    for (std::uint32_t row = 0; row < window.height; ++row) {
      const auto* src = codes_.data() + std::size_t{window.y + row} * header.width + window.x;
      std::copy_n(src, window.width, out.data() + std::size_t{row} * window.width);
    }
  }

 private:
  std::vector<ClassCode> codes_;
};

class BinaryFileSource final : public CategoricalRaster::Source {
 public:
  BinaryFileSource(const std::filesystem::path& path, std::uint64_t payloadOffset)
      : fd_(path), payloadOffset_(payloadOffset) {}

  void read(const RasterHeader& header, const Window& window,
            std::span<ClassCode> out) const override {
    const unsigned cw = header.codeWidth;
    for (std::uint32_t row = 0; row < window.height; ++row) {
      ClassCode* dst = out.data() + std::size_t{row} * window.width;
      const std::uint64_t offset =
          payloadOffset_ + (std::uint64_t{window.y + row} * header.width + window.x) * cw;
      // Raw bytes land at the front of the row slot and are widened in place,
      // back to front, so no scratch buffer is needed.
      auto* bytes = reinterpret_cast<unsigned char*>(dst);
      preadExact(fd_.get(), bytes, std::size_t{window.width} * cw, offset);
      for (std::size_t i = window.width; i-- > 0;) {
        const unsigned char* p = bytes + i * cw;
        ClassCode v = p[0];
        if (cw >= 2) v |= ClassCode{p[1]} << 8;
        if (cw == 4) v |= (ClassCode{p[2]} << 16) | (ClassCode{p[3]} << 24);
        dst[i] = v;
      }
    }
  }

 private:
  FileDescriptor fd_;
  std::uint64_t payloadOffset_;
};

class AsciiFileSource final : public CategoricalRaster::Source {
 public:
  AsciiFileSource(std::filesystem::path path, std::vector<std::uint64_t> rowOffsets)
      : path_(std::move(path)), rowOffsets_(std::move(rowOffsets)) {}

  void read(const RasterHeader& header, const Window& window,
            std::span<ClassCode> out) const override {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw IoError("cannot open " + path_.string());
    const ClassCode maxCode = maxCodeFor(header.codeWidth);
    for (std::uint32_t row = 0; row < window.height; ++row) {
      in.clear();
      in.seekg(static_cast<std::streamoff>(rowOffsets_[window.y + row]));
      std::uint64_t value = 0;
      for (std::uint32_t col = 0; col < window.x + window.width; ++col) {
        if (!(in >> value)) throw IoError(path_.string() + ": truncated ASCII payload");
        if (col < window.x) continue;
        if (value > maxCode)
          throw ValidationError(path_.string() + ": code " + std::to_string(value) +
                                " exceeds the declared code width");
        out[std::size_t{row} * window.width + (col - window.x)] = static_cast<ClassCode>(value);
      }
    }
  }

 private:
  std::filesystem::path path_;
  std::vector<std::uint64_t> rowOffsets_;
};

/// Byte offset of the first token of every row. One streaming pass; O(height)
/// memory.
std::vector<std::uint64_t> indexAsciiRows(const std::filesystem::path& path,
                                          std::uint64_t payloadOffset, const RasterHeader& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(static_cast<std::streamoff>(payloadOffset));
  std::vector<std::uint64_t> offsets;
  offsets.reserve(header.height);
  const std::uint64_t expected = std::uint64_t{header.width} * header.height;
  std::uint64_t tokens = 0;
  std::uint64_t position = payloadOffset;
  bool inToken = false;
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < got; ++i, ++position) {
      const char c = buffer[i];
      const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
      if (!space && !inToken) {
        if (c < '0' || c > '9')
          throw ValidationError(path.string() + ": non-numeric token in ASCII payload");
        if (tokens % header.width == 0) offsets.push_back(position);
        ++tokens;
      }
      inToken = !space;
    }
  }
  if (tokens != expected)
    throw ValidationError(path.string() + ": expected " + std::to_string(expected) +
                          " codes, found " + std::to_string(tokens));
  return offsets;
}

}  // namespace

// CategoricalRaster ----------------------------------------------------------

CategoricalRaster::CategoricalRaster(RasterHeader header, std::shared_ptr<const Source> source,
                                     LegendPtr legend)
    : header_(header),
      source_(std::move(source)),
      legend_(std::move(legend)),
      decoded_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
  if (legend_) {
    if (legend_->indexOfCode(header_.nodata))
      throw ValidationError("nodata code " + std::to_string(header_.nodata) +
                            " is also a class of legend '" + legend_->id() + "'");
    lookup_ = std::make_shared<const CodeLookup>(*legend_);
  }
}

CategoricalRaster CategoricalRaster::withLegend(LegendPtr legend) const {
  CategoricalRaster copy(header_, source_, std::move(legend));
  copy.decoded_ = decoded_;
  return copy;
}

CategoricalRaster CategoricalRaster::fromCodes(std::uint32_t width, std::uint32_t height,
                                               ClassCode nodata, unsigned codeWidth,
                                               std::vector<ClassCode> codes, LegendPtr legend) {
  if (width == 0 || height == 0) throw ValidationError("zero dimension");
  checkCodeWidth(codeWidth);
  if (codes.size() != std::uint64_t{width} * height)
    throw ValidationError("in-memory raster: expected " +
                          std::to_string(std::uint64_t{width} * height) + " codes, got " +
                          std::to_string(codes.size()));
  const ClassCode maxCode = maxCodeFor(codeWidth);
  if (nodata > maxCode) throw ValidationError("nodata code does not fit the code width");
  for (const auto c : codes)
    if (c > maxCode)
      throw ValidationError("code " + std::to_string(c) + " does not fit the code width");
  RasterHeader header;
  header.width = width;
  header.height = height;
  header.nodata = nodata;
  header.codeWidth = codeWidth;
  return CategoricalRaster(header, std::make_shared<MemorySource>(std::move(codes)),
                           std::move(legend));
}

void CategoricalRaster::readWindowInto(const Window& window, std::span<ClassCode> out) const {
  if (window.width == 0 || window.height == 0 || window.x + std::uint64_t{window.width} > width() ||
      window.y + std::uint64_t{window.height} > height())
    throw ValidationError("window out of raster bounds");
  if (out.size() != window.area()) throw ValidationError("window buffer has the wrong size");
  source_->read(header_, window, out);
  decoded_->fetch_add(window.area(), std::memory_order_relaxed);
  if (!lookup_) return;
  const ClassCode nodata = header_.nodata;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const ClassCode c = out[i];
    if (c != nodata && (*lookup_)(c) == CodeLookup::kAbsent) {
      const auto col = window.x + i % window.width;
      const auto row = window.y + i / window.width;
      throw ValidationError("pixel code " + std::to_string(c) + " at (" + std::to_string(col) +
                            ", " + std::to_string(row) + ") is neither nodata nor in legend '" +
                            legend_->id() + "'");
    }
  }
}

Tile CategoricalRaster::readWindow(const Window& window) const {
  Tile tile{window, std::vector<ClassCode>(window.area())};
  readWindowInto(window, tile.data);
  return tile;
}

Tile CategoricalRaster::readTile(const TileGrid& grid, std::uint32_t tx, std::uint32_t ty) const {
  return readWindow(grid.window(tx, ty));
}

std::vector<ClassCode> CategoricalRaster::readAll() const {
  return readWindow(Window{0, 0, width(), height()}).data;
}

CategoricalRaster openRaster(const std::filesystem::path& path, LegendPtr legend) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  char c = 0;
  while (in.get(c) && c != '\n') {
    line += c;
    if (line.size() > kMaxHeaderBytes) throw ValidationError("malformed header: line too long");
  }
  if (c != '\n') throw ValidationError("malformed header: missing newline");
  const RasterHeader header = parseRasterHeader(line);
  const std::uint64_t payloadOffset = line.size() + 1;
  in.close();

  std::shared_ptr<const CategoricalRaster::Source> source;
  if (header.encoding == RasterEncoding::Binary) {
    const auto expected =
        payloadOffset + std::uint64_t{header.width} * header.height * header.codeWidth;
    const auto actual = std::filesystem::file_size(path);
    if (actual != expected)
      throw ValidationError(path.string() + ": payload is " + std::to_string(actual) +
                            " bytes, header implies " + std::to_string(expected));
    source = std::make_shared<BinaryFileSource>(path, payloadOffset);
  } else {
    source = std::make_shared<AsciiFileSource>(path, indexAsciiRows(path, payloadOffset, header));
  }
  return CategoricalRaster(header, std::move(source), std::move(legend));
}

void writeRaster(const std::filesystem::path& path, const CategoricalRaster& raster,
                 RasterEncoding encoding, std::uint32_t stripRows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  RasterHeader header = raster.header();
  header.encoding = encoding;
  out << header.line();
  const unsigned cw = header.codeWidth;
  std::vector<unsigned char> bytes;
  std::string text;
  for (std::uint32_t y = 0; y < raster.height(); y += stripRows) {
    const Window strip{0, y, raster.width(), std::min(stripRows, raster.height() - y)};
    const Tile tile = raster.readWindow(strip);
    if (encoding == RasterEncoding::Binary) {
      bytes.resize(tile.data.size() * cw);
      for (std::size_t i = 0; i < tile.data.size(); ++i)
        for (unsigned b = 0; b < cw; ++b)
          bytes[i * cw + b] = static_cast<unsigned char>(tile.data[i] >> (8 * b));
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    } else {
      for (std::uint32_t row = 0; row < strip.height; ++row) {
        text.clear();
        for (std::uint32_t col = 0; col < strip.width; ++col) {
          if (col) text += ' ';
          text += std::to_string(tile.at(col, row));
        }
        text += '\n';
        out << text;
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

AlignmentReport validateAlignment(const CategoricalRaster& a, const CategoricalRaster& b) {
  AlignmentReport report;
  report.sameDimensions = a.width() == b.width() && a.height() == b.height();
  if (report.sameDimensions) {
    report.pixelCount = a.pixelCount();
    report.notes = "grids match (" + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                   "); sub-pixel registration not checked";
  } else {
    report.notes = "dimension mismatch: " + std::to_string(a.width()) + "x" +
                   std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                   std::to_string(b.height());
  }
  return report;
}

}  // namespace mapxtab
