"""pvpython side of the vizbridge ParaView adapter.

Connects to a pvserver running in multi-client mode and answers one JSON
command per stdin line with one JSON reply per stdout line:

    {"ok": true, "result": ...}
    {"ok": false, "kind": "<error kind>", "error": "<message>"}

Usage: pvpython paraview_bridge.py HOST PORT
"""

import json
import sys

from paraview import servermanager
from paraview import simple as pv


class BridgeError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _gid(proxy):
    return proxy.GetGlobalIDAsString()


class Bridge:
    def __init__(self):
        self.view = pv.GetActiveViewOrCreate("RenderView")
        self.azimuth = 0.0
        self.elevation = 0.0

    # -- pipeline queries -------------------------------------------------

    def _proxies(self):
        items = sorted(pv.GetSources().items(), key=lambda kv: int(kv[0][1]))
        return [(name, proxy) for (name, _), proxy in items]

    def _array(self, reader):
        names = reader.PointData.keys()
        if not names:
            raise BridgeError("backend", "dataset has no point arrays")
        return names[0]

    def _kind(self, proxy):
        if proxy.GetXMLName() == "Contour":
            return "contour"
        if proxy.ListProperties().count("Input") == 0:
            return "reader"
        return None

    def _reader_of(self, proxy):
        while self._kind(proxy) == "contour":
            proxy = proxy.Input
        return proxy

    def _lookup(self, sid):
        if sid.startswith("vol-"):
            reader = self._lookup(sid[4:])
            if not self._has_volume(reader):
                raise BridgeError("unknown_source", "unknown source '%s'" % sid)
            return reader
        for _, proxy in self._proxies():
            if _gid(proxy) == sid:
                return proxy
        raise BridgeError("unknown_source", "unknown source '%s'" % sid)

    def _has_volume(self, reader):
        display = pv.GetDisplayProperties(reader, view=self.view)
        return display is not None and display.Representation == "Volume"

    def _range(self, proxy):
        reader = self._reader_of(proxy)
        lo, hi = reader.PointData[self._array(reader)].GetRange()
        return [lo, hi]

    def list(self, _req):
        out = []
        for name, proxy in self._proxies():
            kind = self._kind(proxy)
            if kind is None:
                continue
            visible = bool(pv.GetDisplayProperties(proxy, view=self.view).Visibility)
            entry = {
                "id": _gid(proxy),
                "name": name,
                "kind": kind,
                "params": {},
                "parent_id": None,
                "visible": visible,
            }
            if kind == "contour":
                entry["params"]["value"] = float(proxy.Isosurfaces[0])
                entry["parent_id"] = _gid(proxy.Input)
            else:
                entry["params"]["scalar_range"] = self._range(proxy)
                file_name = getattr(proxy, "FileName", None)
                if file_name:
                    entry["params"]["path"] = str(file_name)
            out.append(entry)
            if kind == "reader" and self._has_volume(proxy):
                out.append({
                    "id": "vol-" + _gid(proxy),
                    "name": "volume-" + name,
                    "kind": "volume_repr",
                    "params": {},
                    "parent_id": _gid(proxy),
                    "visible": visible,
                })
        return out

    # -- mutations --------------------------------------------------------

    def load(self, req):
        reader = pv.OpenDataFile(req["path"])
        if reader is None:
            raise BridgeError("cannot_read", "cannot read dataset '%s'" % req["path"])
        pv.Show(reader, self.view)
        pv.Render(self.view)
        return _gid(reader)

    def contour(self, req):
        parent = self._lookup(req["parent"])
        contour = pv.Contour(Input=parent)
        contour.ContourBy = ["POINTS", self._array(parent)]
        contour.Isosurfaces = [req["value"]]
        pv.Show(contour, self.view)
        pv.Render(self.view)
        return _gid(contour)

    def set_contour(self, req):
        contour = self._lookup(req["id"])
        contour.Isosurfaces = [req["value"]]
        pv.Render(self.view)
        return None

    def area(self, req):
        contour = self._lookup(req["id"])
        integrate = pv.IntegrateVariables(Input=contour)
        try:
            data = servermanager.Fetch(integrate)
            array = data.GetCellData().GetArray("Area")
            if array is None:
                raise BridgeError("area_undefined", "contour has no surface")
            return float(array.GetValue(0))
        finally:
            pv.Delete(integrate)

    def range(self, req):
        return self._range(self._lookup(req["id"]))

    def histogram(self, req):
        reader = self._reader_of(self._lookup(req["id"]))
        hist = pv.Histogram(Input=reader)
        hist.SelectInputArray = ["POINTS", self._array(reader)]
        hist.BinCount = int(req["bins"])
        try:
            table = servermanager.Fetch(hist)
            values = table.GetRowData().GetArray("bin_values")
            return [int(values.GetValue(i)) for i in range(values.GetNumberOfTuples())]
        finally:
            pv.Delete(hist)

    def volume(self, req):
        reader = self._lookup(req["id"])
        display = pv.Show(reader, self.view)
        display.SetRepresentationType("Volume")
        array = self._array(reader)
        pv.ColorBy(display, ("POINTS", array))
        lo, hi = self._range(reader)
        lut = pv.GetColorTransferFunction(array)
        pwf = pv.GetOpacityTransferFunction(array)
        lut.RGBPoints = [lo, 0.0, 0.0, 1.0, hi, 1.0, 0.0, 0.0]
        pwf.Points = [lo, 0.0, 0.5, 0.0, hi, 1.0, 0.5, 0.0]
        pv.Render(self.view)
        return "vol-" + _gid(reader)

    def _maps(self, sid):
        reader = self._lookup(sid)
        array = self._array(reader)
        return pv.GetColorTransferFunction(array), pv.GetOpacityTransferFunction(array)

    def get_tf(self, req):
        lut, pwf = self._maps(req["id"])
        rgb = list(lut.RGBPoints)
        pts = list(pwf.Points)
        return {
            "color_points": [
                {"scalar": rgb[i], "rgb": rgb[i + 1:i + 4]} for i in range(0, len(rgb), 4)
            ],
            "opacity_points": [
                {"scalar": pts[i], "alpha": pts[i + 1]} for i in range(0, len(pts), 4)
            ],
        }

    def set_tf(self, req):
        lut, pwf = self._maps(req["id"])
        tf = req["tf"]
        flat_rgb = []
        for p in tf["color_points"]:
            flat_rgb.extend([p["scalar"]] + list(p["rgb"]))
        flat_alpha = []
        for p in tf["opacity_points"]:
            flat_alpha.extend([p["scalar"], p["alpha"], 0.5, 0.0])
        lut.RGBPoints = flat_rgb
        pwf.Points = flat_alpha
        pv.Render(self.view)
        return None

    def screenshot(self, req):
        pv.SaveScreenshot(req["path"], self.view, ImageResolution=[req["width"], req["height"]])
        return req["path"]

    def camera(self, _req):
        return {"azimuth": self.azimuth, "elevation": self.elevation}

    def reset_camera(self, _req):
        self.view.ResetCamera()
        camera = pv.GetActiveCamera()
        camera.SetPosition(0.0, 0.0, 1.0)
        camera.SetFocalPoint(0.0, 0.0, 0.0)
        camera.SetViewUp(0.0, 1.0, 0.0)
        self.view.ResetCamera()
        self.azimuth = 0.0
        self.elevation = 0.0
        pv.Render(self.view)
        return None

    def orbit(self, req):
        camera = pv.GetActiveCamera()
        camera.Azimuth(req["azimuth"])
        camera.Elevation(req["elevation"])
        self.azimuth = (self.azimuth + req["azimuth"]) % 360.0
        self.elevation = max(-90.0, min(90.0, self.elevation + req["elevation"]))
        pv.Render(self.view)
        return None

    def delete(self, req):
        sid = req["id"]
        if sid.startswith("vol-"):
            reader = self._lookup(sid)
            pv.GetDisplayProperties(reader, view=self.view).SetRepresentationType("Outline")
            return None
        pv.Delete(self._lookup(sid))
        return None

    def visibility(self, req):
        proxy = self._lookup(req["id"])
        if req["visible"]:
            pv.Show(proxy, self.view)
        else:
            pv.Hide(proxy, self.view)
        pv.Render(self.view)
        return None

    def dispatch(self, req):
        handler = getattr(self, req.get("op", ""), None)
        if handler is None or req["op"].startswith("_"):
            raise BridgeError("invalid_argument", "unknown op %r" % req.get("op"))
        return handler(req)


def main():
    host, port = sys.argv[1], int(sys.argv[2])
    pv.Connect(host, port)
    bridge = Bridge()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            reply = {"ok": True, "result": bridge.dispatch(json.loads(line))}
        except BridgeError as err:
            reply = {"ok": False, "kind": err.kind, "error": str(err)}
        except Exception as err:  # noqa: BLE001 - every failure goes back as a reply
            reply = {"ok": False, "kind": "backend", "error": repr(err)}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
