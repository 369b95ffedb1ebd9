/*
    MIT License

    Copyright (c) 2026 The kdt authors

    Permission is hereby granted, free of charge, to any person obtaining a copy
    of this software and associated documentation files (the "Software"), to deal
    in the Software without restriction, including without limitation the rights
    to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
    copies of the Software, and to permit persons to whom the Software is
    furnished to do so, subject to the following conditions:

    The above copyright notice and this permission notice shall be included in all
    copies or substantial portions of the Software.

    THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
    IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
    FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
    AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
    LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
    OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
    SOFTWARE.
*/

// Generated by tools/gen_poly_tables.py. Do not edit.
#pragma once

namespace kdt::detail
{

template <int S>
struct PolyTables;

template <>
struct PolyTables<2>
{
    static constexpr double backward[4][4] = {
        {1.0, 0.0, 0.0, 0.0},
        {0.0, 1.0, 0.0, 0.0},
        {-3.0, -2.0, 3.0, -1.0},
        {2.0, 1.0, -2.0, 1.0}};
    static constexpr double energy[4][4] = {
        {12.0, 6.0, -12.0, 6.0},
        {6.0, 4.0, -6.0, 2.0},
        {-12.0, -6.0, 12.0, -6.0},
        {6.0, 2.0, -6.0, 4.0}};
};

template <>
struct PolyTables<3>
{
    static constexpr double backward[6][6] = {
        {1.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.0, 1.0, 0.0, 0.0, 0.0, 0.0},
        {0.0, 0.0, 1.0 / 2.0, 0.0, 0.0, 0.0},
        {-10.0, -6.0, -3.0 / 2.0, 10.0, -4.0, 1.0 / 2.0},
        {15.0, 8.0, 3.0 / 2.0, -15.0, 7.0, -1.0},
        {-6.0, -3.0, -1.0 / 2.0, 6.0, -3.0, 1.0 / 2.0}};
    static constexpr double energy[6][6] = {
        {720.0, 360.0, 60.0, -720.0, 360.0, -60.0},
        {360.0, 192.0, 36.0, -360.0, 168.0, -24.0},
        {60.0, 36.0, 9.0, -60.0, 24.0, -3.0},
        {-720.0, -360.0, -60.0, 720.0, -360.0, 60.0},
        {360.0, 168.0, 24.0, -360.0, 192.0, -36.0},
        {-60.0, -24.0, -3.0, 60.0, -36.0, 9.0}};
};

template <>
struct PolyTables<4>
{
    static constexpr double backward[8][8] = {
        {1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.0, 0.0, 1.0 / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.0, 0.0, 0.0, 1.0 / 6.0, 0.0, 0.0, 0.0, 0.0},
        {-35.0, -20.0, -5.0, -2.0 / 3.0, 35.0, -15.0, 5.0 / 2.0, -1.0 / 6.0},
        {84.0, 45.0, 10.0, 1.0, -84.0, 39.0, -7.0, 1.0 / 2.0},
        {-70.0, -36.0, -15.0 / 2.0, -2.0 / 3.0, 70.0, -34.0, 13.0 / 2.0, -1.0 / 2.0},
        {20.0, 10.0, 2.0, 1.0 / 6.0, -20.0, 10.0, -2.0, 1.0 / 6.0}};
    static constexpr double energy[8][8] = {
        {100800.0, 50400.0, 10080.0, 840.0, -100800.0, 50400.0, -10080.0, 840.0},
        {50400.0, 25920.0, 5400.0, 480.0, -50400.0, 24480.0, -4680.0, 360.0},
        {10080.0, 5400.0, 1200.0, 120.0, -10080.0, 4680.0, -840.0, 60.0},
        {840.0, 480.0, 120.0, 16.0, -840.0, 360.0, -60.0, 4.0},
        {-100800.0, -50400.0, -10080.0, -840.0, 100800.0, -50400.0, 10080.0, -840.0},
        {50400.0, 24480.0, 4680.0, 360.0, -50400.0, 25920.0, -5400.0, 480.0},
        {-10080.0, -4680.0, -840.0, -60.0, 10080.0, -5400.0, 1200.0, -120.0},
        {840.0, 360.0, 60.0, 4.0, -840.0, 480.0, -120.0, 16.0}};
};

} // namespace kdt::detail
