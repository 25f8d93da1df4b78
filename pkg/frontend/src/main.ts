// Entry point: ?service=<base url> picks the backend (defaults to the
// local dev service), ?session=<id> attaches to an existing session.

import { ServiceClient } from "./api.js";
import { ConsoleApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8000";
const session = params.get("session") ?? undefined;

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}
const app = new ConsoleApp(new ServiceClient(base), root, document);
void app.start(session);
