/*
   Copyright 2026 The homogenize-lab authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace homlab {

/// Bad configuration or constructor arguments. CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what)
        : std::runtime_error(what) {}
};

/// Numeric-quality failure detected mid-run (flow monotonicity loss,
/// non-PSD estimates beyond statistical tolerance). CLI exit code 3.
class NumericQualityError : public std::runtime_error {
public:
    explicit NumericQualityError(const std::string& what)
        : std::runtime_error(what) {}
};

/// Filesystem failure. CLI exit code 4.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace homlab
