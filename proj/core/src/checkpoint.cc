/*
 * Copyright 2026 The etp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "etp/checkpoint.h"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "etp/errors.h"

namespace etp {

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return &v;
  }
  return nullptr;
}

const Matrix* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

std::string format_double(double v) {
  std::array<char, 64> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw DataError("format_double: conversion failed");
  return std::string(buf.data(), end);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw DataError("parse_double: invalid number '" + s + "'");
  }
  return v;
}

Checkpoint capture(const ParameterSet& params) {
  Checkpoint ckpt;
  for (const auto& [name, tensor] : params.entries()) {
    ckpt.tensors.emplace_back(name, tensor.value());
  }
  return ckpt;
}

void apply(const Checkpoint& checkpoint, ParameterSet& params) {
  for (const auto& [name, tensor] : params.entries()) {
    const Matrix* src = checkpoint.find_tensor(name);
    if (src == nullptr) {
      throw DataError("checkpoint: missing tensor '" + name + "'");
    }
    Tensor t = tensor;
    Matrix& dst = t.mutable_value();
    if (dst.rows() != src->rows() || dst.cols() != src->cols()) {
      throw DimensionError("checkpoint: tensor '" + name + "' has shape " +
                           shape_string(*src) + ", model expects " +
                           shape_string(dst));
    }
    dst = *src;
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open '" + path + "' for write");
  out << "etp-checkpoint " << kCheckpointVersion << "\n";
  for (const auto& [key, value] : checkpoint.meta) {
    if (key.find_first_of(" \n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw DataError("checkpoint: metadata key/value contains a separator");
    }
    out << "meta " << key << " " << value << "\n";
  }
  for (const auto& [name, m] : checkpoint.tensors) {
    out << "tensor " << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c != 0) out << ' ';
        out << format_double(m(r, c));
      }
      out << "\n";
    }
  }
  out << "end\n";
  if (!out) throw DataError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> DataError {
    return DataError("checkpoint " + path + ":" + std::to_string(line_no) +
                     ": " + what);
  };
  if (!std::getline(in, line)) throw fail("empty file");
  ++line_no;
  if (line != "etp-checkpoint " + std::to_string(kCheckpointVersion)) {
    throw fail("unsupported header '" + line + "'");
  }
  Checkpoint ckpt;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("meta ", 0) == 0) {
      std::size_t sp = line.find(' ', 5);
      if (sp == std::string::npos) {
        ckpt.meta.emplace_back(line.substr(5), "");
      } else {
        ckpt.meta.emplace_back(line.substr(5, sp - 5), line.substr(sp + 1));
      }
      continue;
    }
    if (line.rfind("tensor ", 0) != 0) throw fail("unexpected line");
    std::istringstream header(line.substr(7));
    std::string name;
    long rows = -1;
    long cols = -1;
    if (!(header >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw fail("malformed tensor header");
    }
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw fail("truncated tensor '" + name + "'");
      ++line_no;
      std::istringstream row(line);
      std::string tok;
      for (long c = 0; c < cols; ++c) {
        if (!(row >> tok)) throw fail("short row in tensor '" + name + "'");
        m(r, c) = parse_double(tok);
      }
      if (row >> tok) throw fail("long row in tensor '" + name + "'");
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!ended) throw fail("missing 'end' marker");
  return ckpt;
}

}  // namespace etp
