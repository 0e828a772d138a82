import { bootstrap } from "./app.js";

bootstrap(window);
